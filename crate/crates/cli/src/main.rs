//! flowmg: desk-scale solver studies for Stokes, space-time Stokes, and
//! stabilized Navier-Stokes with matrix-free multigrid.
//!
//! Usage:
//!   flowmg <exp1|exp2|exp3|exp4|mms> --config <path> --out <dir> [--seed N] [--ranks P]
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use flowmg_cli::config::Config;
use flowmg_cli::{exp1, exp2, exp34, mms, RunError};

struct Args {
    command: String,
    config: PathBuf,
    out: PathBuf,
    seed: u64,
    ranks: usize,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let command = argv.next().ok_or_else(usage)?;
    if command == "--help" || command == "-h" {
        return Err(usage());
    }
    let mut config = None;
    let mut out = None;
    let mut seed = 0u64;
    let mut ranks = 1usize;
    while let Some(flag) = argv.next() {
        let mut value = || argv.next().ok_or_else(|| format!("{flag} needs a value"));
        match flag.as_str() {
            "--config" => config = Some(PathBuf::from(value()?)),
            "--out" => out = Some(PathBuf::from(value()?)),
            "--seed" => {
                seed = value()?
                    .parse()
                    .map_err(|_| "--seed expects an integer".to_string())?
            }
            "--ranks" => {
                ranks = value()?
                    .parse()
                    .map_err(|_| "--ranks expects an integer".to_string())?
            }
            other => return Err(format!("unknown flag `{other}`\n{}", usage())),
        }
    }
    Ok(Args {
        command,
        config: config.ok_or("missing --config")?,
        out: out.ok_or("missing --out")?,
        seed,
        ranks,
    })
}

fn usage() -> String {
    "usage: flowmg <exp1|exp2|exp3|exp4|mms> --config <path> --out <dir> [--seed N] [--ranks P]"
        .to_string()
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };
    let cfg = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("cannot create output directory: {e}");
        return ExitCode::from(2);
    }
    let result: Result<(), RunError> = match args.command.as_str() {
        "exp1" => exp1::run(&cfg, &args.out, args.seed, args.ranks).map(|r| {
            for row in &r.rows {
                println!(
                    "exp1[{}] cycle {}: {} dofs, {} outer iterations, max eig {:.3}",
                    r.variant, row.cycle, row.dofs, row.outer_iterations, row.max_eig
                );
            }
        }),
        "exp2" => exp2::run(&cfg, &args.out, args.seed, args.ranks).map(|r| {
            for row in &r.rows {
                println!(
                    "exp2 ref {} k {}: {} cells, N_T {}, avg linear {:.2}",
                    row.refinement, row.k, row.cells, row.n_t, row.avg_linear
                );
            }
        }),
        "exp3" => exp34::run_exp3(&cfg, &args.out, args.seed, args.ranks).map(|r| {
            for row in &r.rows {
                println!(
                    "exp3[{}]: N_T {}, avg newton {:.2}, avg linear {:.2}, eta_w {:.3}, eta_v {:.3}",
                    row.strategy, row.n_t, row.avg_newton, row.avg_linear, row.eta_w, row.eta_v
                );
            }
        }),
        "exp4" => exp34::run_exp4(&cfg, &args.out, args.seed, args.ranks).map(|r| {
            for row in &r.rows {
                println!(
                    "exp4[{}]: N_N {}, avg linear {:.2}, eta_w {:.3}, eta_v {:.3}",
                    row.strategy, row.n_t, row.avg_linear, row.eta_w, row.eta_v
                );
            }
        }),
        "mms" => mms::run(&cfg, &args.out, args.seed, args.ranks).map(|reports| {
            for r in &reports {
                println!(
                    "mms {}: order {:.2} (expected {:.1} +- {:.1}) {} [{}]",
                    r.case,
                    r.measured_order,
                    r.expected_order,
                    r.tolerance,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.notes
                );
            }
        }),
        other => {
            eprintln!("unknown command `{other}`\n{}", usage());
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
