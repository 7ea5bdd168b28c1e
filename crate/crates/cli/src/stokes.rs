//! Stationary Stokes solves with the hp-multigrid block preconditioner,
//! shared by the experiment drivers and the verification harness.

use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use flowmg_core::disc::{
    BlockSpace, ConstraintSet, DirichletSpec, FieldLayout, PressureRule,
};
use flowmg_core::error::{Error, Result};
use flowmg_core::mesh::Mesh;
use flowmg_core::mg::hierarchy::{build_multigrid, PatchRule};
use flowmg_core::mg::{LevelChain, MgOperator, SmootherConfig, SystemBc};
use flowmg_core::op::{assemble_rhs, KernelBase, LaplaceOperator, LinearOperator, MassOperator, StokesOperator};
use flowmg_core::solver::{
    max_eigenvalue_estimate, solve_fgmres, BlockTriangularStokes, KrylovConfig,
};
use flowmg_core::Scalar;

pub struct StokesProblem {
    pub mesh: Arc<Mesh>,
    pub degrees: Vec<u8>,
    pub nu: Scalar,
    /// inhomogeneous Dirichlet for (u_x, u_y)
    pub velocity_bc: [DirichletSpec; 2],
    /// pin the pressure dof nearest the point to the given value
    pub pressure_pin: Option<([Scalar; 2], Scalar)>,
    pub forcing: Option<[crate::ScalarFn; 2]>,
    pub smoother: SmootherConfig,
    pub patch_rule: Option<PatchRule>,
    pub fgmres: KrylovConfig,
    pub ranks: usize,
}

pub struct StokesSolution {
    pub layout: FieldLayout,
    pub values: Vec<Scalar>,
    pub n_dofs: usize,
    pub outer_iterations: usize,
    pub inner_cg_iterations: usize,
    pub max_eig_estimate: Scalar,
    pub mg_levels: usize,
}

pub fn solve_stokes(p: &StokesProblem) -> Result<StokesSolution> {
    let bs = BlockSpace::distribute_dofs(&p.mesh, &p.degrees, PressureRule::TaylorHood)?;
    let cons_ux = Arc::new(ConstraintSet::build(&bs.velocity, &p.velocity_bc[0], 0.0));
    let cons_uy = Arc::new(ConstraintSet::build(&bs.velocity, &p.velocity_bc[1], 0.0));
    let mut cons_p = ConstraintSet::build(&bs.pressure, &DirichletSpec::none(), 0.0);
    if let Some((point, value)) = p.pressure_pin {
        let dof = nearest_pressure_dof(&bs, point);
        cons_p = cons_p.pin_dof_value(dof, bs.pressure.n_dofs(), value);
    }
    let cons_p = Arc::new(cons_p);
    let layout = FieldLayout::new(vec![
        (bs.velocity.clone(), cons_ux),
        (bs.velocity.clone(), cons_uy),
        (bs.pressure.clone(), cons_p.clone()),
    ]);
    let op = Arc::new(StokesOperator::new(layout.clone(), p.nu)?);

    // A-block hp hierarchy (velocity components only; the boundary regions
    // of u_x cover both components' Dirichlet structure)
    let bc = SystemBc::velocity_only(p.velocity_bc[0].clone());
    let chain = LevelChain::hp(&p.mesh, &p.degrees, None, &bc, p.ranks, false)?;
    let nu = p.nu;
    let mut factory = |_l: usize, spaces: &flowmg_core::mg::LevelSpaces| {
        Ok(Box::new(LaplaceOperator::new(spaces.layout.clone(), nu)) as Box<dyn MgOperator>)
    };
    let a_mg = Arc::new(build_multigrid(&chain, &mut factory, &p.smoother, p.patch_rule)?);

    // Schur approximation: (1/nu) M_p with Jacobi-CG
    let p_layout = FieldLayout::new(vec![(bs.pressure.clone(), cons_p)]);
    let mp = Arc::new(MassOperator::pressure_mass_scaled(p_layout, p.nu)?);
    let inner = Arc::new(AtomicUsize::new(0));
    let pc = BlockTriangularStokes::new(op.clone(), a_mg.clone(), mp, inner.clone());

    // right-hand side: forcing plus the boundary lift
    let n = layout.n_dofs();
    let mut x_bc = vec![0.0; n];
    layout.distribute(&mut x_bc);
    let mut b = match &p.forcing {
        Some(f) => {
            let base = KernelBase::new(layout.clone(), 1);
            let fx = |x: [Scalar; 2]| f[0](x);
            let fy = |x: [Scalar; 2]| f[1](x);
            assemble_rhs(&base, &[Some(&fx), Some(&fy), None])
        }
        None => vec![0.0; n],
    };
    // the boundary lift acts on the raw inhomogeneous values
    let mut kx = vec![0.0; n];
    flowmg_core::op::kernel_apply_direct(op.as_ref(), &x_bc, &mut kx);
    for i in 0..n {
        b[i] -= kx[i];
    }
    layout.zero_constrained(&mut b);

    let x0 = vec![0.0; n];
    let (delta, stats) = solve_fgmres(op.as_ref(), Some(&pc), &b, &x0, &p.fgmres)?;
    if !stats.converged {
        return Err(Error::Diverged(format!(
            "stokes FGMRES stalled at {:?}",
            stats.residuals.last()
        )));
    }
    let mut values = x_bc;
    for i in 0..n {
        values[i] += delta[i];
    }
    layout.distribute(&mut values);

    // robustness metric: largest eigenvalue of the MG-preconditioned A-block
    let a_block = LaplaceOperator::new(chain.finest().layout.clone(), p.nu);
    let max_eig = max_eigenvalue_estimate(&a_block, a_mg.as_ref(), 12, 0x0e16);

    Ok(StokesSolution {
        layout,
        values,
        n_dofs: n,
        outer_iterations: stats.iterations,
        inner_cg_iterations: inner.load(std::sync::atomic::Ordering::Relaxed),
        max_eig_estimate: max_eig,
        mg_levels: chain.n_levels(),
    })
}

fn nearest_pressure_dof(bs: &BlockSpace, point: [Scalar; 2]) -> usize {
    let sp = &bs.pressure;
    let mut best = (Scalar::INFINITY, 0usize);
    for pos in 0..sp.mesh().n_active() {
        for (local, &d) in sp.cell_dofs(pos).iter().enumerate() {
            let x = sp.node_position(pos, local);
            let dist = (x[0] - point[0]).powi(2) + (x[1] - point[1]).powi(2);
            if dist < best.0 {
                best = (dist, d);
            }
        }
    }
    best.1
}
