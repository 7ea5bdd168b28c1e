//! Krylov methods, the block-triangular Stokes preconditioner, and the
//! Newton-Krylov / BDF2 drivers for Navier-Stokes.

mod krylov;
mod newton;
mod stokes_pc;

pub use krylov::{
    solve_cg, solve_fgmres, solve_gmres, IdentityPrecond, KrylovConfig, Preconditioner,
    SolveStats,
};
pub use newton::{
    bdf2_march, newton_solve, newton_solve_inspect, ramp_reynolds, MarchStats, NewtonConfig,
    NewtonStats, NsContext,
};
pub use stokes_pc::BlockTriangularStokes;

use crate::la::SplitMix64;
use crate::num::Scalar;
use crate::op::LinearOperator;

/// Power-iteration estimate of the largest eigenvalue magnitude of M^{-1} A,
/// from a deterministic seed vector.
pub fn max_eigenvalue_estimate(
    op: &dyn LinearOperator,
    pc: &dyn Preconditioner,
    iterations: usize,
    seed: u64,
) -> Scalar {
    let n = op.n();
    let mut rng = SplitMix64::new(seed);
    let mut v: Vec<Scalar> = rng.vector(n);
    let mut av = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut lambda: Scalar = 0.0;
    for _ in 0..iterations {
        let nv = crate::la::norm2(&v);
        if nv == 0.0 {
            break;
        }
        crate::la::scale(1.0 / nv, &mut v);
        op.apply(&v, &mut av);
        pc.apply_to(&av, &mut z);
        lambda = crate::la::norm2(&z);
        std::mem::swap(&mut v, &mut z);
    }
    lambda
}

#[cfg(test)]
mod solver_tests;
