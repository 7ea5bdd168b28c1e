//! Experiment 1: stationary Stokes through a T-junction channel with
//! successive hp-adaptive refinement cycles, comparing point-Jacobi and
//! ASM-enhanced Chebyshev smoothing in the hp-multigrid A-block
//! preconditioner.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use flowmg_core::disc::{
    kelly_estimate, legendre_smoothness, mark_hp, BoundaryCondition, Component, DirichletSpec,
    SolutionField,
};
use flowmg_core::mesh::Mesh;
use flowmg_core::mg::hierarchy::PatchRule;
use flowmg_core::mg::SmootherConfig;
use flowmg_core::solver::KrylovConfig;
use flowmg_core::Scalar;

use crate::config::Config;
use crate::setup::{build_mesh, CsvField, CsvFile};
use crate::stokes::{solve_stokes, StokesProblem};
use crate::RunError;

const TOL: Scalar = 1e-9;

#[derive(Clone, Debug)]
pub struct Exp1Row {
    pub cycle: usize,
    pub cells: usize,
    pub dofs: usize,
    pub outer_iterations: usize,
    pub max_eig: Scalar,
    pub work: usize,
    pub time_s: Scalar,
}

pub struct Exp1Result {
    pub rows: Vec<Exp1Row>,
    pub variant: String,
}

/// Dirichlet structure of the T-junction: Hagen-Poiseuille inflow at x = 0,
/// zero-traction outflow at x = 3 and the arm top y = 2, no-slip walls.
fn tjunction_bc(u_max: Scalar) -> [DirichletSpec; 2] {
    let is_outflow = |x: [Scalar; 2]| x[0] > 3.0 - TOL || x[1] > 2.0 - TOL;
    let is_inflow = move |x: [Scalar; 2]| x[0] < TOL;
    let ux = DirichletSpec {
        conditions: vec![
            BoundaryCondition::new(is_inflow, move |x, _| 4.0 * u_max * x[1] * (1.0 - x[1])),
            BoundaryCondition::zero(move |x| !is_outflow(x)),
        ],
    };
    let uy = DirichletSpec {
        conditions: vec![BoundaryCondition::zero(move |x| !is_outflow(x))],
    };
    [ux, uy]
}

pub fn run(cfg: &Config, out: &Path, _seed: u64, ranks: usize) -> Result<Exp1Result, RunError> {
    let nu = cfg.f64_or("physics", "nu", 1.0)?;
    let cycles = cfg.usize_or("adaptivity", "cycles", 4)?;
    let p0 = cfg.usize_or("discretization", "degree", 2)? as u8;
    let p_max = cfg.usize_or("discretization", "max_degree", 4)? as u8;
    let refine_fraction = cfg.f64_or("adaptivity", "refine_fraction", 0.1)?;
    let p_fraction = cfg.f64_or("adaptivity", "p_fraction", 0.5)?;
    let sigma_threshold = cfg.f64_or("adaptivity", "sigma_threshold", 1.0)?;
    let variant = cfg.str_or("solver", "smoother", "jacobi+asm").to_string();
    let rtol = cfg.f64_or("solver", "rtol", 1e-8)?;
    let degree = cfg.usize_or("solver", "chebyshev_degree", 5)?;
    let restart = cfg.usize_or("solver", "restart", 60)?;
    let u_max = cfg.f64_or("physics", "inflow_velocity", 1.0)?;
    let dump_fields = cfg.usize_or("output", "vtk_stride", 0)?;

    let (smoother, patch_rule) = match variant.as_str() {
        "jacobi" => (SmootherConfig::chebyshev_jacobi(degree), None),
        "jacobi+asm" => (
            SmootherConfig::chebyshev_jacobi_asm(degree),
            Some(PatchRule::HpInterfaceFaces),
        ),
        other => {
            return Err(RunError::Config(crate::config::ConfigError(format!(
                "unknown smoother variant `{other}`"
            ))))
        }
    };

    let mut mesh: Arc<Mesh> = build_mesh(cfg)?;
    let mut degrees = vec![p0; mesh.n_active()];
    let mut rows = Vec::new();
    let mut csv = CsvFile::new(&[
        "cycle",
        "cells",
        "dofs",
        "outer_iterations",
        "max_eig",
        "work",
        "time_s",
    ]);

    for cycle in 0..cycles {
        let problem = StokesProblem {
            mesh: mesh.clone(),
            degrees: degrees.clone(),
            nu,
            velocity_bc: tjunction_bc(u_max),
            pressure_pin: None,
            forcing: None,
            smoother: smoother.clone(),
            patch_rule,
            fgmres: KrylovConfig {
                rtol,
                atol: 1e-300,
                max_iter: 400,
                restart,
            },
            ranks,
        };
        let start = std::time::Instant::now();
        let sol = solve_stokes(&problem).map_err(RunError::Solver)?;
        let elapsed = start.elapsed().as_secs_f64();
        let work = sol.outer_iterations * sol.n_dofs;
        rows.push(Exp1Row {
            cycle,
            cells: mesh.n_active(),
            dofs: sol.n_dofs,
            outer_iterations: sol.outer_iterations,
            max_eig: sol.max_eig_estimate,
            work,
            time_s: elapsed,
        });
        csv.row(&[
            CsvField::UInt(cycle),
            CsvField::UInt(mesh.n_active()),
            CsvField::UInt(sol.n_dofs),
            CsvField::UInt(sol.outer_iterations),
            CsvField::Num(sol.max_eig_estimate),
            CsvField::UInt(work),
            CsvField::Num(elapsed),
        ]);
        if dump_fields > 0 && cycle % dump_fields == 0 {
            crate::setup::export_field(
                &out.join(format!("fields_{cycle:03}.vtk")),
                &mesh,
                &sol.layout,
                &sol.values,
                &degrees,
                None,
            )
            .map_err(RunError::io)?;
        }
        if cycle + 1 == cycles {
            break;
        }

        // estimate, mark, adapt
        let field = SolutionField {
            layout: sol.layout.clone(),
            values: sol.values.clone(),
        };
        let indicators = kelly_estimate(&field, Component::Velocity);
        let smoothness: Vec<Scalar> = (0..mesh.n_active())
            .map(|pos| {
                let s0 = legendre_smoothness(&field, 0, pos);
                let s1 = legendre_smoothness(&field, 1, pos);
                s0.min(s1)
            })
            .collect();
        let flags = mark_hp(
            &indicators,
            &smoothness,
            refine_fraction,
            p_fraction,
            sigma_threshold,
        );
        let mut p_raised: BTreeSet<flowmg_core::mesh::CellKey> = BTreeSet::new();
        for &pos in &flags.p {
            if degrees[pos] < p_max {
                p_raised.insert(mesh.cell(mesh.active_ids()[pos]).key);
            }
        }
        let h_ids: BTreeSet<usize> = flags
            .h
            .iter()
            .map(|&pos| mesh.active_ids()[pos])
            .collect();
        let old_mesh = mesh.clone();
        let old_degrees = degrees.clone();
        mesh = Arc::new(old_mesh.refine(&h_ids).map_err(RunError::Solver)?);
        degrees = mesh
            .active_cells()
            .map(|c| {
                // inherit from the matching old cell or its ancestor
                let mut key = c.key;
                loop {
                    if let Some(id) = old_mesh.find(key) {
                        if old_mesh.cell(id).is_active() {
                            let pos = old_mesh.active_position(id).unwrap();
                            let base = old_degrees[pos];
                            let bump = p_raised.contains(&key);
                            return if bump { (base + 1).min(p_max) } else { base };
                        }
                    }
                    match key.parent() {
                        Some(p) => key = p,
                        None => return p0,
                    }
                }
            })
            .collect();
    }

    csv.write(&out.join("stats.csv")).map_err(RunError::io)?;
    Ok(Exp1Result { rows, variant })
}
