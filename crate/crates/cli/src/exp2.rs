//! Experiment 2: transient Stokes flow past an obstacle in a channel,
//! discretized with DG(k) in time and solved slab by slab with GMRES
//! preconditioned by one V-cycle of hp space-time multigrid.

use std::path::Path;
use std::sync::Arc;

use flowmg_core::disc::{
    BlockSpace, BoundaryCondition, ConstraintSet, DirichletSpec, PressureRule,
};
use flowmg_core::mesh::Mesh;
use flowmg_core::mg::{LevelChain, MgOperator, SmootherConfig, SystemBc};
use flowmg_core::op::{MassOperator, StokesOperator};
use flowmg_core::solver::KrylovConfig;
use flowmg_core::spacetime::{build_stmg, march_slabs, SlabSystem, TemporalBasis};
use flowmg_core::Scalar;

use crate::config::Config;
use crate::setup::{build_mesh, refine_all, CsvField, CsvFile};
use crate::RunError;

const TOL: Scalar = 1e-9;

#[derive(Clone, Debug)]
pub struct Exp2Row {
    pub refinement: usize,
    pub k: usize,
    pub cells: usize,
    pub n_t: usize,
    pub avg_linear: Scalar,
    pub time_s: Scalar,
}

pub struct Exp2Result {
    pub rows: Vec<Exp2Row>,
}

/// Channel Dirichlet structure: time-ramped parabolic inflow at x = 0,
/// no-slip walls and obstacle, do-nothing outflow at x = length.
fn channel_bc(length: Scalar, height: Scalar) -> [DirichletSpec; 2] {
    let is_outflow = move |x: [Scalar; 2]| x[0] > length - TOL;
    let is_inflow = move |x: [Scalar; 2]| x[0] < TOL;
    let h = height;
    let ux = DirichletSpec {
        conditions: vec![
            BoundaryCondition::new(is_inflow, move |x, t| {
                (std::f64::consts::PI / 8.0 * t).sin() * 6.0 * x[1] * (h - x[1]) / (h * h)
            }),
            BoundaryCondition::zero(move |x| !is_outflow(x)),
        ],
    };
    let uy = DirichletSpec {
        conditions: vec![BoundaryCondition::zero(move |x| !is_outflow(x))],
    };
    [ux, uy]
}

pub fn run(cfg: &Config, out: &Path, _seed: u64, ranks: usize) -> Result<Exp2Result, RunError> {
    let nu = cfg.f64_or("physics", "nu", 1e-2)?;
    let dims = cfg.floats("mesh", "channel")?;
    let (length, height) = (dims[0], dims[1]);
    let t_end = cfg.f64_or("time", "t_end", 2.0)?;
    let tau0 = cfg.f64_or("time", "tau", 0.25)?;
    let refinements = cfg.usizes_or("sweep", "refinements", &[0, 1])?;
    let ks = cfg.usizes_or("sweep", "temporal_degrees", &[1, 2])?;
    let rtol = cfg.f64_or("solver", "rtol", 1e-8)?;
    let max_iter = cfg.usize_or("solver", "max_iter", 300)?;
    let omega = cfg.f64_or("solver", "asm_omega", 0.5)?;
    let asm_iters = cfg.usize_or("solver", "asm_iterations", 3)?;

    let base_mesh = build_mesh(cfg)?;
    let mut rows = Vec::new();
    let mut csv = CsvFile::new(&["refinement", "k", "cells", "n_t", "avg_linear", "time_s"]);

    for &refinement in &refinements {
        let mut mesh: Arc<Mesh> = base_mesh.clone();
        for _ in 0..refinement {
            mesh = Arc::new(refine_all(&mesh));
        }
        for &k in &ks {
            let start = std::time::Instant::now();
            let row = run_case(
                &mesh, k, nu, length, height, t_end, tau0 / (1 << refinement) as Scalar,
                rtol, max_iter, asm_iters, omega, ranks,
            )?;
            let elapsed = start.elapsed().as_secs_f64();
            csv.row(&[
                CsvField::UInt(refinement),
                CsvField::UInt(k),
                CsvField::UInt(mesh.n_active()),
                CsvField::UInt(row.1),
                CsvField::Num(row.0),
                CsvField::Num(elapsed),
            ]);
            rows.push(Exp2Row {
                refinement,
                k,
                cells: mesh.n_active(),
                n_t: row.1,
                avg_linear: row.0,
                time_s: elapsed,
            });
        }
    }
    csv.write(&out.join("stats.csv")).map_err(RunError::io)?;
    Ok(Exp2Result { rows })
}

#[allow(clippy::too_many_arguments)]
fn run_case(
    mesh: &Arc<Mesh>,
    k: usize,
    nu: Scalar,
    length: Scalar,
    height: Scalar,
    t_end: Scalar,
    tau: Scalar,
    rtol: Scalar,
    max_iter: usize,
    asm_iters: usize,
    omega: Scalar,
    ranks: usize,
) -> Result<(Scalar, usize), RunError> {
    let p = (k + 1) as u8; // DG(k) pairs with Taylor-Hood Q_{k+1}/Q_k
    let degrees = vec![p; mesh.n_active()];
    let [bc_ux, bc_uy] = channel_bc(length, height);
    let bc = SystemBc {
        velocity: bc_ux.clone(),
        pressure: DirichletSpec::none(),
        pin_pressure: None,
    };
    let chain = LevelChain::hp(
        mesh,
        &degrees,
        Some(PressureRule::TaylorHood),
        &bc,
        ranks,
        true,
    )
    .map_err(RunError::Solver)?;
    let basis = Arc::new(TemporalBasis::new(k));
    let mut make_ops = |_l: usize, spaces: &flowmg_core::mg::LevelSpaces| {
        let mass: Arc<dyn MgOperator> = Arc::new(MassOperator::block_mass(spaces.layout.clone()));
        let stiff: Arc<dyn MgOperator> = Arc::new(
            StokesOperator::new(spaces.layout.clone(), nu)?.with_identity_rows(false),
        );
        Ok((mass, stiff))
    };
    let (mg, _infos) = build_stmg(
        &chain,
        &basis,
        tau,
        &mut make_ops,
        &SmootherConfig::asm(asm_iters, omega),
    )
    .map_err(RunError::Solver)?;
    let finest = chain.finest();
    let layout = finest.layout.clone();
    let n = layout.n_dofs();
    let mass: Arc<dyn MgOperator> = Arc::new(MassOperator::block_mass(layout.clone()));
    let stiff: Arc<dyn MgOperator> = Arc::new(
        StokesOperator::new(layout.clone(), nu)
            .map_err(RunError::Solver)?
            .with_identity_rows(false),
    );
    let system = SlabSystem::new(basis.clone(), tau, mass, stiff, finest.constrained_dofs())
        .map_err(RunError::Solver)?;

    // inhomogeneous stage boundary values on the solver numbering
    let bs = BlockSpace::distribute_dofs(mesh, &degrees, PressureRule::TaylorHood)
        .map_err(RunError::Solver)?;
    let mut cons_ux = ConstraintSet::build(&bs.velocity, &bc_ux, 0.0);
    let cons_uy = ConstraintSet::build(&bs.velocity, &bc_uy, 0.0);
    let n_s = bs.velocity.n_dofs();
    let nodes = basis.nodes.clone();
    let q = basis.stages();
    let n_t = (t_end / tau).round() as usize;
    let mut stage_bc = |slab: usize, x: &mut [Scalar]| {
        let t0 = slab as Scalar * tau;
        for (s, &node) in nodes.iter().enumerate() {
            let t = t0 + tau * node;
            cons_ux.refresh_time(&bc_ux, t);
            let slice = &mut x[s * n..(s + 1) * n];
            cons_ux.distribute(&mut slice[0..n_s]);
            cons_uy.distribute(&mut slice[n_s..2 * n_s]);
        }
    };
    let mut loads = |_slab: usize, _prev: &[Scalar]| vec![0.0; q * n];
    let gmres = KrylovConfig {
        rtol,
        atol: 1e-300,
        max_iter,
        restart: 100,
    };
    let ic = vec![0.0; n];
    let stats = march_slabs(
        &system,
        &mg,
        &ic,
        n_t,
        &mut loads,
        &mut stage_bc,
        &gmres,
        None,
    )
    .map_err(RunError::Solver)?;
    Ok((stats.avg_linear(), n_t))
}
