//! The symmetric Stokes saddle-point operator
//! K = [[A, B], [B^T, 0]] with A the viscous vector Laplacian and B the
//! discrete (negative) gradient, in the component layout [u_x | u_y | p].

use crate::disc::tables::TensorEval;
use crate::disc::FieldLayout;
use crate::error::{Error, Result};
use crate::num::Scalar;

use super::{kernel_apply, CellKernel, KernelBase, LinearOperator};

pub struct StokesOperator {
    base: KernelBase,
    nu: Scalar,
    identity_rows: bool,
}

impl StokesOperator {
    /// `layout` must be the three-component [u_x | u_y | p] layout.
    pub fn new(layout: FieldLayout, nu: Scalar) -> Result<StokesOperator> {
        if nu <= 0.0 {
            return Err(Error::NonPositiveViscosity);
        }
        assert_eq!(layout.n_components(), 3, "Stokes layout is [ux, uy, p]");
        Ok(StokesOperator {
            base: KernelBase::new(layout, 1),
            nu,
            identity_rows: true,
        })
    }

    pub fn with_identity_rows(mut self, on: bool) -> StokesOperator {
        self.identity_rows = on;
        self
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.base.layout
    }

    pub fn n_u(&self) -> usize {
        self.base.layout.offset(2)
    }

    pub fn n_p(&self) -> usize {
        self.base.layout.n_dofs() - self.n_u()
    }

    /// A x_u: the velocity block alone.
    pub fn apply_velocity_block(&self, x_u: &[Scalar]) -> Result<Vec<Scalar>> {
        if x_u.len() != self.n_u() {
            return Err(Error::SizeMismatch {
                expected: self.n_u(),
                got: x_u.len(),
            });
        }
        let mut x = vec![0.0; self.n()];
        x[..self.n_u()].copy_from_slice(x_u);
        let y = self.apply_alloc(&x);
        Ok(y[..self.n_u()].to_vec())
    }

    /// B x_p: the discrete gradient (velocity-sized output).
    pub fn apply_gradient(&self, x_p: &[Scalar]) -> Result<Vec<Scalar>> {
        if x_p.len() != self.n_p() {
            return Err(Error::SizeMismatch {
                expected: self.n_p(),
                got: x_p.len(),
            });
        }
        let mut x = vec![0.0; self.n()];
        x[self.n_u()..].copy_from_slice(x_p);
        let y = self.apply_alloc(&x);
        Ok(y[..self.n_u()].to_vec())
    }

    /// B^T x_u: the exact transpose of `apply_gradient`.
    pub fn apply_divergence(&self, x_u: &[Scalar]) -> Result<Vec<Scalar>> {
        if x_u.len() != self.n_u() {
            return Err(Error::SizeMismatch {
                expected: self.n_u(),
                got: x_u.len(),
            });
        }
        let mut x = vec![0.0; self.n()];
        x[..self.n_u()].copy_from_slice(x_u);
        let y = self.apply_alloc(&x);
        Ok(y[self.n_u()..].to_vec())
    }
}

impl CellKernel for StokesOperator {
    fn base(&self) -> &KernelBase {
        &self.base
    }

    fn constrained_identity(&self) -> bool {
        self.identity_rows
    }

    fn apply_cell(&self, pos: usize, x_loc: &[Scalar], y_loc: &mut [Scalar]) {
        let geo = &self.base.geometry[pos];
        let tv = self.base.table(pos, 0);
        let tp = self.base.table(pos, 2);
        let ev_v = TensorEval::new(tv);
        let ev_p = TensorEval::new(tp);
        let nv = tv.n_nodes() * tv.n_nodes();
        let np = tp.n_nodes() * tp.n_nodes();
        let n_pts = ev_v.n_points();
        debug_assert_eq!(n_pts, ev_p.n_points());

        let mut u_val = [vec![0.0; n_pts], vec![0.0; n_pts]];
        let mut u_grad = [vec![[0.0; 2]; n_pts], vec![[0.0; 2]; n_pts]];
        for c in 0..2 {
            ev_v.evaluate(
                &x_loc[c * nv..(c + 1) * nv],
                &mut u_val[c],
                &mut u_grad[c],
                None,
            );
        }
        let mut p_val = vec![0.0; n_pts];
        let mut p_grad = vec![[0.0; 2]; n_pts];
        ev_p.evaluate(&x_loc[2 * nv..2 * nv + np], &mut p_val, &mut p_grad, None);

        let vc = [vec![0.0; n_pts], vec![0.0; n_pts]];
        let mut gc = [vec![[0.0; 2]; n_pts], vec![[0.0; 2]; n_pts]];
        let mut pc = vec![0.0; n_pts];
        let zero_g = vec![[0.0; 2]; n_pts];
        for q in 0..n_pts {
            let it = &geo.inv_t[q];
            let push = |g: [Scalar; 2]| {
                [
                    it[0][0] * g[0] + it[0][1] * g[1],
                    it[1][0] * g[0] + it[1][1] * g[1],
                ]
            };
            let pull = |g: [Scalar; 2]| {
                [
                    it[0][0] * g[0] + it[1][0] * g[1],
                    it[0][1] * g[0] + it[1][1] * g[1],
                ]
            };
            let gx = push(u_grad[0][q]);
            let gy = push(u_grad[1][q]);
            let div_u = gx[0] + gy[1];
            let w = geo.jxw[q];
            // momentum: nu grad u : grad v - p div v
            let phys0 = [self.nu * gx[0] - p_val[q], self.nu * gx[1]];
            let phys1 = [self.nu * gy[0], self.nu * gy[1] - p_val[q]];
            let r0 = pull(phys0);
            let r1 = pull(phys1);
            gc[0][q] = [w * r0[0], w * r0[1]];
            gc[1][q] = [w * r1[0], w * r1[1]];
            // continuity row of the symmetric form: -(div u, q)
            pc[q] = -w * div_u;
        }
        for c in 0..2 {
            ev_v.integrate(&vc[c], &gc[c], &mut y_loc[c * nv..(c + 1) * nv]);
        }
        ev_p.integrate(&pc, &zero_g, &mut y_loc[2 * nv..2 * nv + np]);
    }
}

impl LinearOperator for StokesOperator {
    fn n(&self) -> usize {
        self.base.layout.n_dofs()
    }

    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        kernel_apply(self, x, y);
    }
}
