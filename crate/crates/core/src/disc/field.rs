//! Multi-component field layouts and solution vectors.

use std::sync::Arc;

use crate::mesh::bilinear_map;
use crate::num::Scalar;

use super::constraints::ConstraintSet;
use super::space::ScalarSpace;

/// Global layout of stacked scalar components, each with its own constraints.
/// The Stokes/Navier-Stokes layout is `[u_x | u_y | p]`.
#[derive(Clone)]
pub struct FieldLayout {
    comps: Vec<(Arc<ScalarSpace>, Arc<ConstraintSet>)>,
    offsets: Vec<usize>,
    n_total: usize,
}

impl FieldLayout {
    pub fn new(comps: Vec<(Arc<ScalarSpace>, Arc<ConstraintSet>)>) -> FieldLayout {
        let mut offsets = Vec::with_capacity(comps.len());
        let mut n = 0;
        for (s, _) in &comps {
            offsets.push(n);
            n += s.n_dofs();
        }
        FieldLayout {
            comps,
            offsets,
            n_total: n,
        }
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_total
    }

    pub fn space(&self, c: usize) -> &Arc<ScalarSpace> {
        &self.comps[c].0
    }

    pub fn constraints(&self, c: usize) -> &Arc<ConstraintSet> {
        &self.comps[c].1
    }

    pub fn offset(&self, c: usize) -> usize {
        self.offsets[c]
    }

    pub fn range(&self, c: usize) -> std::ops::Range<usize> {
        self.offsets[c]..self.offsets[c] + self.comps[c].0.n_dofs()
    }

    pub fn zeros(&self) -> Vec<Scalar> {
        vec![0.0; self.n_total]
    }

    pub fn distribute(&self, x: &mut [Scalar]) {
        for (c, (_, cons)) in self.comps.iter().enumerate() {
            cons.distribute(&mut x[self.range(c)]);
        }
    }

    pub fn distribute_homogeneous(&self, x: &mut [Scalar]) {
        for (c, (_, cons)) in self.comps.iter().enumerate() {
            cons.distribute_homogeneous(&mut x[self.range(c)]);
        }
    }

    pub fn zero_constrained(&self, x: &mut [Scalar]) {
        for (c, (_, cons)) in self.comps.iter().enumerate() {
            cons.zero_constrained(&mut x[self.range(c)]);
        }
    }

    /// Is global dof `g` constrained in its component?
    pub fn is_constrained(&self, g: usize) -> bool {
        let c = self.component_of(g);
        self.comps[c].1.is_constrained(g - self.offsets[c])
    }

    pub fn component_of(&self, g: usize) -> usize {
        match self.offsets.binary_search(&g) {
            Ok(c) => c,
            Err(c) => c - 1,
        }
    }
}

/// A field over a layout: plain values indexed per the layout.
#[derive(Clone)]
pub struct SolutionField {
    pub layout: FieldLayout,
    pub values: Vec<Scalar>,
}

impl SolutionField {
    pub fn zeros(layout: &FieldLayout) -> SolutionField {
        SolutionField {
            layout: layout.clone(),
            values: layout.zeros(),
        }
    }

    /// Interpolate analytic component functions at every dof node.
    pub fn interpolate(
        layout: &FieldLayout,
        fns: &[&dyn Fn([Scalar; 2]) -> Scalar],
    ) -> SolutionField {
        assert_eq!(fns.len(), layout.n_components());
        let mut values = layout.zeros();
        for c in 0..layout.n_components() {
            let space = layout.space(c);
            let off = layout.offset(c);
            for pos in 0..space.mesh().n_active() {
                let dofs = space.cell_dofs(pos);
                for (local, &d) in dofs.iter().enumerate() {
                    let x = space.node_position(pos, local);
                    values[off + d] = fns[c](x);
                }
            }
        }
        SolutionField {
            layout: layout.clone(),
            values,
        }
    }

    /// Evaluate one component at a reference point of a cell.
    pub fn eval_on_cell(&self, comp: usize, pos: usize, xi: Scalar, eta: Scalar) -> Scalar {
        let space = self.layout.space(comp);
        let off = self.layout.offset(comp);
        let p = space.degree(pos) as usize;
        let basis = crate::poly::LagrangeBasis::new(crate::quad::gauss_lobatto_points(p + 1));
        let dofs = space.cell_dofs(pos);
        let mut v = 0.0;
        for b in 0..=p {
            for a in 0..=p {
                v += self.values[off + dofs[b * (p + 1) + a]] * basis.value(a, xi) * basis.value(b, eta);
            }
        }
        v
    }

    /// Corner-point samples of a component, ordered like the VTK point list.
    pub fn corner_values(&self, comp: usize) -> Vec<Scalar> {
        let space = self.layout.space(comp);
        let mesh = space.mesh();
        let mut out = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for (pos, c) in mesh.active_cells().enumerate() {
            let p = space.degree(pos) as usize;
            let n1 = p + 1;
            let dofs = space.cell_dofs(pos);
            let locals = [0, p, n1 * n1 - 1, p * n1]; // corners 0..4 in ccw order
            for (k, v) in c.vertices.iter().enumerate() {
                let bits = (v[0].to_bits(), v[1].to_bits());
                if !seen.contains_key(&bits) {
                    seen.insert(bits, out.len());
                    out.push(self.values[self.layout.offset(comp) + dofs[locals[k]]]);
                }
            }
        }
        out
    }
}

/// L2 norm of the difference between a field component and an analytic
/// function, integrated with `n_q`-point Gauss quadrature per cell.
pub fn l2_error(
    field: &SolutionField,
    comp: usize,
    exact: &dyn Fn([Scalar; 2]) -> Scalar,
    n_q: usize,
) -> Scalar {
    let space = field.layout.space(comp);
    let mesh = space.mesh();
    let rule = crate::quad::gauss_legendre::<Scalar>(n_q);
    let mut total = 0.0;
    for (pos, cell) in mesh.active_cells().enumerate() {
        for (i, &xi) in rule.points.iter().enumerate() {
            for (j, &eta) in rule.points.iter().enumerate() {
                let x = bilinear_map(&cell.vertices, xi, eta);
                let det = crate::mesh::bilinear_jacobian(&cell.vertices, xi, eta).det();
                let diff = field.eval_on_cell(comp, pos, xi, eta) - exact(x);
                total += rule.weights[i] * rule.weights[j] * det * diff * diff;
            }
        }
    }
    total.sqrt()
}
