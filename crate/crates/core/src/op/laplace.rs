//! Viscous (vector) Laplacian: nu (grad u, grad v) per component.

use crate::disc::tables::TensorEval;
use crate::disc::FieldLayout;
use crate::num::Scalar;

use super::{kernel_apply, CellKernel, KernelBase, LinearOperator};

pub struct LaplaceOperator {
    base: KernelBase,
    nu: Scalar,
    identity_rows: bool,
}

impl LaplaceOperator {
    pub fn new(layout: FieldLayout, nu: Scalar) -> LaplaceOperator {
        LaplaceOperator {
            base: KernelBase::new(layout, 1),
            nu,
            identity_rows: true,
        }
    }

    pub fn with_identity_rows(mut self, on: bool) -> LaplaceOperator {
        self.identity_rows = on;
        self
    }

    pub fn base(&self) -> &KernelBase {
        &self.base
    }
}

impl CellKernel for LaplaceOperator {
    fn base(&self) -> &KernelBase {
        &self.base
    }

    fn constrained_identity(&self) -> bool {
        self.identity_rows
    }

    fn apply_cell(&self, pos: usize, x_loc: &[Scalar], y_loc: &mut [Scalar]) {
        let layout = &self.base.layout;
        let geo = &self.base.geometry[pos];
        let mut off = 0;
        for c in 0..layout.n_components() {
            let t = self.base.table(pos, c);
            let ev = TensorEval::new(t);
            let n_loc = t.n_nodes() * t.n_nodes();
            let n_pts = ev.n_points();
            let mut vals = vec![0.0; n_pts];
            let mut grads = vec![[0.0; 2]; n_pts];
            ev.evaluate(&x_loc[off..off + n_loc], &mut vals, &mut grads, None);
            let mut val_c = vec![0.0; n_pts];
            let mut grad_c = vec![[0.0; 2]; n_pts];
            for q in 0..n_pts {
                let it = &geo.inv_t[q];
                let g = [
                    it[0][0] * grads[q][0] + it[0][1] * grads[q][1],
                    it[1][0] * grads[q][0] + it[1][1] * grads[q][1],
                ];
                // physical contribution nu*g, pulled back to reference
                let w = self.nu * geo.jxw[q];
                grad_c[q] = [
                    w * (it[0][0] * g[0] + it[1][0] * g[1]),
                    w * (it[0][1] * g[0] + it[1][1] * g[1]),
                ];
                val_c[q] = 0.0;
            }
            ev.integrate(&val_c, &grad_c, &mut y_loc[off..off + n_loc]);
            off += n_loc;
        }
    }
}

impl LinearOperator for LaplaceOperator {
    fn n(&self) -> usize {
        self.base.layout.n_dofs()
    }

    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        kernel_apply(self, x, y);
    }
}
