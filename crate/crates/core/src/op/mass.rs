//! Mass operators: full mass, scaled pressure mass, and the Stokes block
//! mass (velocity mass with an identically zero pressure block).

use crate::disc::tables::TensorEval;
use crate::disc::FieldLayout;
use crate::num::Scalar;

use super::{kernel_apply, CellKernel, KernelBase, LinearOperator};

pub struct MassOperator {
    base: KernelBase,
    factor: Scalar,
    /// Component mask; inactive components produce zero rows.
    active: Vec<bool>,
    identity_rows: bool,
}

impl MassOperator {
    /// factor * (u, v) on every component.
    pub fn new(layout: FieldLayout, factor: Scalar) -> MassOperator {
        let n = layout.n_components();
        MassOperator {
            base: KernelBase::new(layout, 1),
            factor,
            active: vec![true; n],
            identity_rows: true,
        }
    }

    /// Stokes block mass M_square: velocity mass, zero pressure block
    /// (the last component). Constrained rows are left zero so the operator
    /// can be combined into stage systems.
    pub fn block_mass(layout: FieldLayout) -> MassOperator {
        let n = layout.n_components();
        let mut active = vec![true; n];
        active[n - 1] = false;
        MassOperator {
            base: KernelBase::new(layout, 1),
            factor: 1.0,
            active,
            identity_rows: false,
        }
    }

    /// (1/nu) M_p on a pressure-only layout (Schur complement approximation).
    pub fn pressure_mass_scaled(layout: FieldLayout, nu: Scalar) -> crate::error::Result<MassOperator> {
        if nu <= 0.0 {
            return Err(crate::error::Error::NonPositiveViscosity);
        }
        Ok(MassOperator::new(layout, 1.0 / nu))
    }

    pub fn with_identity_rows(mut self, on: bool) -> MassOperator {
        self.identity_rows = on;
        self
    }
}

impl CellKernel for MassOperator {
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
            if self.active[c] {
                let n_pts = ev.n_points();
                let mut vals = vec![0.0; n_pts];
                let mut grads = vec![[0.0; 2]; n_pts];
                ev.evaluate(&x_loc[off..off + n_loc], &mut vals, &mut grads, None);
                let zero_g = vec![[0.0; 2]; n_pts];
                for q in 0..n_pts {
                    vals[q] *= self.factor * geo.jxw[q];
                }
                ev.integrate(&vals, &zero_g, &mut y_loc[off..off + n_loc]);
            }
            off += n_loc;
        }
    }
}

impl LinearOperator for MassOperator {
    fn n(&self) -> usize {
        self.base.layout.n_dofs()
    }

    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        kernel_apply(self, x, y);
    }
}
