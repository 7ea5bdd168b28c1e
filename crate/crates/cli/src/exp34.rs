//! Experiments 3 and 4: stabilized Navier-Stokes with monolithic hybrid
//! multigrid on locally refined meshes, comparing global-coarsening and
//! local-smoothing hierarchies, with simulated parallel metrics.
//!
//! Exp. 3 is a Taylor-Couette analogue (annulus, rotating inner wall, BDF2
//! marching at fixed CFL); Exp. 4 a cylinder-wake analogue (channel with a
//! square obstacle, steady Reynolds ramp with Kelly-on-pressure adaptivity).

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use flowmg_core::disc::{
    kelly_estimate, BoundaryCondition, ConstraintSet, DirichletSpec, PressureRule,
    ScalarSpace, SolutionField,
};
use flowmg_core::mesh::Mesh;
use flowmg_core::mg::hierarchy::PatchRule;
use flowmg_core::mg::metrics::chain_metrics;
use flowmg_core::mg::{HierarchyKind, LevelChain, SmootherConfig, SystemBc};
use flowmg_core::op::NsParameters;
use flowmg_core::solver::{bdf2_march, newton_solve, KrylovConfig, NewtonConfig, NsContext};
use flowmg_core::Scalar;

use crate::config::Config;
use crate::setup::{build_mesh, CsvField, CsvFile};
use crate::RunError;

const TOL: Scalar = 1e-9;

#[derive(Clone, Debug)]
pub struct NsRunRow {
    pub strategy: String,
    pub n_t: usize,
    pub avg_newton: Scalar,
    pub avg_linear: Scalar,
    pub eta_w: Scalar,
    pub eta_v: Scalar,
    pub time_s: Scalar,
}

pub struct NsRunResult {
    pub rows: Vec<NsRunRow>,
}

/// Per-level min/avg/max per-rank cost proxy (cells weighted by dofs/cell).
fn level_cost_rows(chain: &LevelChain, csv: &mut CsvFile, strategy: &str) {
    for (l, (lvl, pm)) in chain.levels.iter().zip(&chain.partitions).enumerate() {
        let mut per_rank = vec![0usize; pm.num_ranks];
        for (pos, &p) in lvl.vel_degrees.iter().enumerate() {
            let w = (p as usize + 1) * (p as usize + 1) * 3;
            per_rank[pm.ranks[pos]] += w;
        }
        let max = *per_rank.iter().max().unwrap_or(&0);
        let min = *per_rank.iter().min().unwrap_or(&0);
        let avg = per_rank.iter().sum::<usize>() as Scalar / pm.num_ranks as Scalar;
        csv.row(&[
            CsvField::Text(strategy.to_string()),
            CsvField::UInt(l),
            CsvField::UInt(lvl.layout.space(0).mesh().n_active()),
            CsvField::UInt(min),
            CsvField::Num(avg),
            CsvField::UInt(max),
        ]);
    }
}

fn make_chain(
    kind: HierarchyKind,
    mesh: &Arc<Mesh>,
    degrees: &[u8],
    bc: &SystemBc,
    ranks: usize,
) -> flowmg_core::error::Result<Arc<LevelChain>> {
    let chain = match kind {
        HierarchyKind::LocalSmoothing => {
            LevelChain::local_smoothing(mesh, degrees, Some(PressureRule::EqualOrder), bc, ranks)?
        }
        _ => LevelChain::global_coarsening(
            mesh,
            degrees,
            Some(PressureRule::EqualOrder),
            bc,
            ranks,
        )?,
    };
    Ok(Arc::new(chain))
}

/// Inhomogeneous constraint sets on the same numbering the chain uses.
fn bc_sets(
    mesh: &Arc<Mesh>,
    degrees: &[u8],
    specs: &[DirichletSpec; 2],
) -> flowmg_core::error::Result<(Arc<ScalarSpace>, ConstraintSet, ConstraintSet)> {
    let bs = flowmg_core::disc::BlockSpace::distribute_dofs(mesh, degrees, PressureRule::EqualOrder)?;
    let cons_ux = ConstraintSet::build(&bs.velocity, &specs[0], 0.0);
    let cons_uy = ConstraintSet::build(&bs.velocity, &specs[1], 0.0);
    Ok((bs.velocity, cons_ux, cons_uy))
}

pub fn run_exp3(cfg: &Config, out: &Path, _seed: u64, ranks: usize) -> Result<NsRunResult, RunError> {
    let nu = cfg.f64_or("physics", "nu", 1e-3)?;
    let omega_rot = cfg.f64_or("physics", "angular_velocity", 1.0)?;
    let annulus = cfg.floats("mesh", "annulus")?;
    let r_inner = annulus[0];
    let degree = cfg.usize_or("discretization", "degree", 1)? as u8;
    let local_refine = cfg.usize_or("mesh", "local_refine", 1)?;
    let local_radius = cfg.f64_or("mesh", "local_radius", r_inner * 1.4)?;
    let t_end = cfg.f64_or("time", "t_end", 0.5)?;
    let dt_max = cfg.f64_or("time", "dt_max", 0.1)?;
    let cfl = cfg.f64_or("time", "cfl", 1.0)?;
    let jacobi_iters = cfg.usize_or("solver", "smoother_iterations", 5)?;
    let jacobi_omega = cfg.f64_or("solver", "smoother_omega", 0.6)?;
    let strategies = strategy_list(cfg)?;

    // static local refinement towards the inner (rotating) wall
    let mut mesh: Arc<Mesh> = build_mesh(cfg)?;
    for _ in 0..local_refine {
        let flags: BTreeSet<usize> = mesh
            .active_cells()
            .filter(|c| {
                let [x, y] = c.center();
                (x * x + y * y).sqrt() < local_radius
            })
            .map(|c| c.id)
            .collect();
        mesh = Arc::new(mesh.refine(&flags).map_err(RunError::Solver)?);
    }
    let degrees = vec![degree; mesh.n_active()];

    // rotating inner wall: u = omega (-y, x); static outer wall
    let is_inner = {
        let r_mid = (annulus[0] + annulus[1]) / 2.0;
        move |x: [Scalar; 2]| (x[0] * x[0] + x[1] * x[1]).sqrt() < r_mid
    };
    let bc_ux = DirichletSpec {
        conditions: vec![
            BoundaryCondition::new(is_inner, move |x, _| -omega_rot * x[1]),
            BoundaryCondition::zero(|_| true),
        ],
    };
    let bc_uy = DirichletSpec {
        conditions: vec![
            BoundaryCondition::new(is_inner, move |x, _| omega_rot * x[0]),
            BoundaryCondition::zero(|_| true),
        ],
    };
    let sys_bc = SystemBc {
        velocity: bc_ux.clone(),
        pressure: DirichletSpec::none(),
        pin_pressure: Some([r_inner + 1e-3, 0.0]),
    };

    let mut rows = Vec::new();
    let mut stats_csv = CsvFile::new(&[
        "strategy", "cells", "dofs", "n_t", "avg_newton", "avg_linear", "eta_w", "eta_v", "time_s",
    ]);
    let mut levels_csv = CsvFile::new(&["strategy", "level", "cells", "min_cost", "avg_cost", "max_cost"]);
    for kind in strategies {
        let label = strategy_name(kind);
        let chain = make_chain(kind, &mesh, &degrees, &sys_bc, ranks).map_err(RunError::Solver)?;
        let (eta_w, eta_v) = chain_metrics(&chain);
        level_cost_rows(&chain, &mut levels_csv, label);
        let params = NsParameters::navier_stokes(nu, true);
        let ctx = NsContext::new(
            chain.clone(),
            params,
            SmootherConfig::jacobi(jacobi_iters, jacobi_omega),
            None,
        )
        .map_err(RunError::Solver)?;
        let (_vspace, mut cons_ux, mut cons_uy) =
            bc_sets(&mesh, &degrees, &[bc_ux.clone(), bc_uy.clone()]).map_err(RunError::Solver)?;
        let n_s = chain.outer.layout.space(0).n_dofs();
        let (bcx, bcy) = (bc_ux.clone(), bc_uy.clone());
        let mut set_bc = move |state: &mut Vec<Scalar>, t: Scalar| {
            cons_ux.refresh_time(&bcx, t);
            cons_uy.refresh_time(&bcy, t);
            cons_ux.distribute(&mut state[0..n_s]);
            cons_uy.distribute(&mut state[n_s..2 * n_s]);
        };
        let mut state = vec![0.0; chain.n_system];
        let mut newton = NewtonConfig::new();
        newton.rel_tol = cfg.f64_or("solver", "newton_rtol", 1e-6)?;
        newton.abs_tol = cfg.f64_or("solver", "newton_atol", 1e-9)?;
        newton.linear = KrylovConfig::new(cfg.f64_or("solver", "gmres_rtol", 1e-4)?, 300);
        let start = std::time::Instant::now();
        let march = bdf2_march(
            &ctx,
            &mut state,
            t_end,
            dt_max,
            Some(cfl),
            &mut set_bc,
            &newton,
            None,
        )
        .map_err(RunError::Solver)?;
        let elapsed = start.elapsed().as_secs_f64();
        stats_csv.row(&[
            CsvField::Text(label.to_string()),
            CsvField::UInt(mesh.n_active()),
            CsvField::UInt(chain.n_system),
            CsvField::UInt(march.n_steps),
            CsvField::Num(march.avg_newton()),
            CsvField::Num(march.avg_linear()),
            CsvField::Num(eta_w),
            CsvField::Num(eta_v),
            CsvField::Num(elapsed),
        ]);
        rows.push(NsRunRow {
            strategy: label.to_string(),
            n_t: march.n_steps,
            avg_newton: march.avg_newton(),
            avg_linear: march.avg_linear(),
            eta_w,
            eta_v,
            time_s: elapsed,
        });
    }
    stats_csv.write(&out.join("stats.csv")).map_err(RunError::io)?;
    levels_csv.write(&out.join("levels.csv")).map_err(RunError::io)?;
    Ok(NsRunResult { rows })
}

fn strategy_list(cfg: &Config) -> Result<Vec<HierarchyKind>, RunError> {
    let s = cfg.str_or("solver", "strategies", "gc ls");
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        out.push(match tok {
            "gc" => HierarchyKind::GlobalCoarsening,
            "ls" => HierarchyKind::LocalSmoothing,
            other => {
                return Err(RunError::Config(crate::config::ConfigError(format!(
                    "unknown strategy `{other}`"
                ))))
            }
        });
    }
    Ok(out)
}

fn strategy_name(kind: HierarchyKind) -> &'static str {
    match kind {
        HierarchyKind::LocalSmoothing => "ls",
        _ => "gc",
    }
}

pub fn run_exp4(cfg: &Config, out: &Path, _seed: u64, ranks: usize) -> Result<NsRunResult, RunError> {
    let channel = cfg.floats("mesh", "channel")?;
    let (length, height) = (channel[0], channel[1]);
    let obstacle = cfg.floats("mesh", "obstacle")?;
    let d_obstacle = obstacle[3] - obstacle[1];
    let u_in = cfg.f64_or("physics", "inflow_velocity", 1.0)?;
    let reynolds = cfg.floats("physics", "reynolds")?;
    let degree = cfg.usize_or("discretization", "degree", 1)? as u8;
    let adapt_cycles = cfg.usize_or("adaptivity", "cycles", 1)?;
    let refine_fraction = cfg.f64_or("adaptivity", "refine_fraction", 0.15)?;
    let asm_iters = cfg.usize_or("solver", "smoother_iterations", 2)?;
    let strategies = strategy_list(cfg)?;

    // constant entrance velocity, no-slip elsewhere, do-nothing outflow
    let is_outflow = move |x: [Scalar; 2]| x[0] > length - TOL;
    let is_inflow = move |x: [Scalar; 2]| x[0] < TOL;
    let bc_ux = DirichletSpec {
        conditions: vec![
            BoundaryCondition::new(is_inflow, move |_, _| u_in),
            BoundaryCondition::zero(move |x| !is_outflow(x)),
        ],
    };
    let bc_uy = DirichletSpec {
        conditions: vec![BoundaryCondition::zero(move |x| !is_outflow(x))],
    };
    let sys_bc = SystemBc {
        velocity: bc_ux.clone(),
        pressure: DirichletSpec::none(),
        pin_pressure: None,
    };
    let _ = height;

    let mut newton = NewtonConfig::new();
    newton.rel_tol = cfg.f64_or("solver", "newton_rtol", 1e-6)?;
    newton.abs_tol = cfg.f64_or("solver", "newton_atol", 1e-9)?;
    newton.linear = KrylovConfig::new(cfg.f64_or("solver", "gmres_rtol", 1e-4)?, 400);
    newton.max_iter = cfg.usize_or("solver", "newton_max", 25)?;

    // Kelly-on-pressure adaptation at the first Reynolds number
    let mut mesh: Arc<Mesh> = build_mesh(cfg)?;
    let re0 = reynolds[0];
    for _ in 0..adapt_cycles {
        let degrees = vec![degree; mesh.n_active()];
        let nu = u_in * d_obstacle / re0;
        let chain = make_chain(
            HierarchyKind::GlobalCoarsening,
            &mesh,
            &degrees,
            &sys_bc,
            ranks,
        )
        .map_err(RunError::Solver)?;
        let ctx = NsContext::new(
            chain.clone(),
            NsParameters::navier_stokes(nu, true),
            SmootherConfig::asm(asm_iters, 1.0),
            Some(PatchRule::Cells),
        )
        .map_err(RunError::Solver)?;
        let (_vs, mut cons_ux, mut cons_uy) =
            bc_sets(&mesh, &degrees, &[bc_ux.clone(), bc_uy.clone()]).map_err(RunError::Solver)?;
        let n_s = chain.outer.layout.space(0).n_dofs();
        let mut state = vec![0.0; chain.n_system];
        cons_ux.refresh_time(&bc_ux, 0.0);
        cons_uy.refresh_time(&bc_uy, 0.0);
        cons_ux.distribute(&mut state[0..n_s]);
        cons_uy.distribute(&mut state[n_s..2 * n_s]);
        newton_solve(&ctx, &mut state, 0.0, None, &newton).map_err(RunError::Solver)?;
        let field = SolutionField {
            layout: chain.outer.layout.clone(),
            values: state,
        };
        let eta = kelly_estimate(&field, flowmg_core::disc::Component::Pressure);
        let mut order: Vec<usize> = (0..mesh.n_active()).collect();
        order.sort_by(|&a, &b| eta[b].partial_cmp(&eta[a]).unwrap().then(a.cmp(&b)));
        let n_sel = ((refine_fraction * mesh.n_active() as Scalar) + 1e-9).floor() as usize;
        let flags: BTreeSet<usize> = order[..n_sel]
            .iter()
            .map(|&pos| mesh.active_ids()[pos])
            .collect();
        mesh = Arc::new(mesh.refine(&flags).map_err(RunError::Solver)?);
    }

    // Reynolds ramp on the adapted mesh, for each hierarchy strategy
    let degrees = vec![degree; mesh.n_active()];
    let mut rows = Vec::new();
    let mut stats_csv = CsvFile::new(&[
        "strategy", "cells", "dofs", "n_newton", "avg_linear", "eta_w", "eta_v", "time_s",
    ]);
    let mut levels_csv = CsvFile::new(&["strategy", "level", "cells", "min_cost", "avg_cost", "max_cost"]);
    for kind in strategies {
        let label = strategy_name(kind);
        let chain = make_chain(kind, &mesh, &degrees, &sys_bc, ranks).map_err(RunError::Solver)?;
        let (eta_w, eta_v) = chain_metrics(&chain);
        level_cost_rows(&chain, &mut levels_csv, label);
        let (_vs, mut cons_ux, mut cons_uy) =
            bc_sets(&mesh, &degrees, &[bc_ux.clone(), bc_uy.clone()]).map_err(RunError::Solver)?;
        let n_s = chain.outer.layout.space(0).n_dofs();
        let mut state = vec![0.0; chain.n_system];
        cons_ux.refresh_time(&bc_ux, 0.0);
        cons_uy.refresh_time(&bc_uy, 0.0);
        cons_ux.distribute(&mut state[0..n_s]);
        cons_uy.distribute(&mut state[n_s..2 * n_s]);
        let start = std::time::Instant::now();
        let mut final_stats = None;
        for &re in &reynolds {
            let nu = u_in * d_obstacle / re;
            let ctx = NsContext::new(
                chain.clone(),
                NsParameters::navier_stokes(nu, true),
                SmootherConfig::asm(asm_iters, 1.0),
                Some(PatchRule::Cells),
            )
            .map_err(RunError::Solver)?;
            let stats = newton_solve(&ctx, &mut state, 0.0, None, &newton).map_err(RunError::Solver)?;
            final_stats = Some(stats);
        }
        let elapsed = start.elapsed().as_secs_f64();
        let stats = final_stats.unwrap();
        stats_csv.row(&[
            CsvField::Text(label.to_string()),
            CsvField::UInt(mesh.n_active()),
            CsvField::UInt(chain.n_system),
            CsvField::UInt(stats.newton_iterations),
            CsvField::Num(stats.avg_linear()),
            CsvField::Num(eta_w),
            CsvField::Num(eta_v),
            CsvField::Num(elapsed),
        ]);
        rows.push(NsRunRow {
            strategy: label.to_string(),
            n_t: stats.newton_iterations,
            avg_newton: stats.newton_iterations as Scalar,
            avg_linear: stats.avg_linear(),
            eta_w,
            eta_v,
            time_s: elapsed,
        });
    }
    stats_csv.write(&out.join("stats.csv")).map_err(RunError::io)?;
    levels_csv.write(&out.join("levels.csv")).map_err(RunError::io)?;
    Ok(NsRunResult { rows })
}
