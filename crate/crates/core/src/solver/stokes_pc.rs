//! Block-triangular Silvester-Wathen preconditioner for the Stokes system:
//! z_p = -S~^{-1} r_p,  z_u = A~^{-1} (r_u - B z_p),
//! with A~^{-1} one hp-multigrid V-cycle and S~ = (1/nu) M_p inverted by
//! Jacobi-preconditioned CG with a loose tolerance. The inexact inner solves
//! make FGMRES the mandatory outer method.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::num::Scalar;
use crate::op::{MassOperator, StokesOperator};

use super::krylov::{solve_cg, KrylovConfig, Preconditioner};

type Solve = Box<dyn Fn(&[Scalar], &mut [Scalar]) + Send + Sync>;

pub struct BlockTriangularStokes {
    op: Arc<StokesOperator>,
    a_solve: Solve,
    s_solve: Solve,
}

impl BlockTriangularStokes {
    /// Custom inner solves (exact factorizations in tests).
    pub fn with_solvers(op: Arc<StokesOperator>, a_solve: Solve, s_solve: Solve) -> Self {
        BlockTriangularStokes { op, a_solve, s_solve }
    }

    /// Production wiring: one V-cycle for the A-block, inner CG with
    /// `rtol = 1e-2` (cap 30) on the scaled pressure mass for the Schur
    /// block. Inner CG iterations accumulate into `inner_counter`.
    pub fn new(
        op: Arc<StokesOperator>,
        a_mg: Arc<crate::mg::Multigrid>,
        pressure_mass: Arc<MassOperator>,
        inner_counter: Arc<AtomicUsize>,
    ) -> Self {
        let n_u = op.n_u();
        assert_eq!(a_mg.n_system, n_u, "A-block preconditioner size");
        let a_solve: Solve = Box::new(move |r, z| {
            a_mg.apply_preconditioner(r, z);
        });
        let diag = crate::op::compute_diagonal(pressure_mass.as_ref());
        let jacobi = JacobiPrecond {
            inv_diag: diag.iter().map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 }).collect(),
        };
        let cfg = KrylovConfig {
            rtol: 1e-2,
            atol: 1e-300,
            max_iter: 30,
            restart: 30,
        };
        let s_solve: Solve = Box::new(move |r, z| {
            let x0 = vec![0.0; r.len()];
            match solve_cg(pressure_mass.as_ref(), Some(&jacobi), r, &x0, &cfg) {
                Ok((sol, stats)) => {
                    // non-convergence within the cap: proceed with the last iterate
                    inner_counter.fetch_add(stats.iterations, Ordering::Relaxed);
                    z.copy_from_slice(&sol);
                }
                Err(_) => z.copy_from_slice(r),
            }
        });
        BlockTriangularStokes { op, a_solve, s_solve }
    }
}

struct JacobiPrecond {
    inv_diag: Vec<Scalar>,
}

impl Preconditioner for JacobiPrecond {
    fn apply_to(&self, r: &[Scalar], z: &mut [Scalar]) {
        for i in 0..r.len() {
            z[i] = self.inv_diag[i] * r[i];
        }
    }
}

impl Preconditioner for BlockTriangularStokes {
    fn apply_to(&self, r: &[Scalar], z: &mut [Scalar]) {
        let n_u = self.op.n_u();
        let (r_u, r_p) = r.split_at(n_u);
        // z_p = -S~^{-1} r_p
        let mut z_p = vec![0.0; r_p.len()];
        (self.s_solve)(r_p, &mut z_p);
        for v in z_p.iter_mut() {
            *v = -*v;
        }
        // z_u = A~^{-1} (r_u - B z_p)
        let b_zp = self.op.apply_gradient(&z_p).expect("pressure size");
        let rhs: Vec<Scalar> = r_u.iter().zip(&b_zp).map(|(a, b)| a - b).collect();
        let mut z_u = vec![0.0; n_u];
        (self.a_solve)(&rhs, &mut z_u);
        z[..n_u].copy_from_slice(&z_u);
        z[n_u..].copy_from_slice(&z_p);
    }
}
