//! Matrix-free PDE operators: cell-loop application with constraint
//! resolution, plus sparse assembly and diagonal extraction for coarse
//! solvers and smoothers.
//!
//! Every operator applies `C^T K C + I_c`: gather reads constrained dofs
//! through their (homogeneous) constraint expansions, scatter distributes
//! contributions transposed, and constrained rows carry identity so Krylov
//! vectors stay in the constrained subspace.

mod laplace;
mod mass;
mod navier_stokes;
mod stokes;

pub use laplace::LaplaceOperator;
pub use mass::MassOperator;
pub use navier_stokes::{delta1, BdfScheme, Forcing, NsJacobian, NsOperator, NsParameters, Transient};
pub use stokes::StokesOperator;

use std::collections::HashMap;

use crate::disc::{FieldLayout, Tables1d};
use crate::la::{CsrMatrix, DenseMatrix, Triplets};
use crate::mesh::{bilinear_jacobian, bilinear_map, bilinear_mixed_second};
use crate::num::Scalar;

pub trait LinearOperator: Send + Sync {
    fn n(&self) -> usize;
    fn apply(&self, x: &[Scalar], y: &mut [Scalar]);

    fn apply_alloc(&self, x: &[Scalar]) -> Vec<Scalar> {
        let mut y = vec![0.0; self.n()];
        self.apply(x, &mut y);
        y
    }
}

/// Per-cell quadrature geometry of the bilinear map.
#[derive(Clone, Debug)]
pub struct CellGeometry {
    /// det(J) * w_q
    pub jxw: Vec<Scalar>,
    /// J^{-T} per point
    pub inv_t: Vec<[[Scalar; 2]; 2]>,
    /// physical quadrature points
    pub points: Vec<[Scalar; 2]>,
    /// d^2 x / (dxi deta), constant over the cell
    pub mixed2: [Scalar; 2],
    /// cell diameter
    pub diameter: Scalar,
}

/// Common state of a cell-loop operator: layout, per-cell dof maps,
/// quadrature geometry, and 1D basis tables per degree.
pub struct KernelBase {
    pub layout: FieldLayout,
    /// per active cell: (component, scalar dof) for each local index
    pub locals: Vec<Vec<(u32, u32)>>,
    pub geometry: Vec<CellGeometry>,
    /// basis tables keyed by component degree (all at this op's n_q per cell)
    pub tables: HashMap<(u8, u8), Tables1d>,
    /// quadrature points per direction, per cell
    pub n_q: Vec<u8>,
}

impl KernelBase {
    /// `extra_points`: quadrature points per direction beyond the max
    /// component degree (1 gives the standard p+1 rule).
    pub fn new(layout: FieldLayout, extra_points: usize) -> KernelBase {
        let mesh = layout.space(0).mesh().clone();
        let n_cells = mesh.n_active();
        let mut locals = Vec::with_capacity(n_cells);
        let mut geometry = Vec::with_capacity(n_cells);
        let mut tables = HashMap::new();
        let mut n_q_per_cell = Vec::with_capacity(n_cells);
        for pos in 0..n_cells {
            let mut cell_locals = Vec::new();
            let mut max_p = 0u8;
            for c in 0..layout.n_components() {
                let space = layout.space(c);
                max_p = max_p.max(space.degree(pos));
                for &d in space.cell_dofs(pos) {
                    cell_locals.push((c as u32, d as u32));
                }
            }
            let n_q = max_p as usize + extra_points;
            n_q_per_cell.push(n_q as u8);
            for c in 0..layout.n_components() {
                let p = layout.space(c).degree(pos);
                tables
                    .entry((p, n_q as u8))
                    .or_insert_with(|| Tables1d::new(p as usize, n_q));
            }
            locals.push(cell_locals);
            let cell = mesh.cell(mesh.active_ids()[pos]);
            let rule = crate::quad::gauss_legendre::<Scalar>(n_q);
            let nq2 = n_q * n_q;
            let mut jxw = Vec::with_capacity(nq2);
            let mut inv_t = Vec::with_capacity(nq2);
            let mut points = Vec::with_capacity(nq2);
            for qy in 0..n_q {
                for qx in 0..n_q {
                    let (xi, eta) = (rule.points[qx], rule.points[qy]);
                    let j = bilinear_jacobian(&cell.vertices, xi, eta);
                    jxw.push(j.det() * rule.weights[qx] * rule.weights[qy]);
                    inv_t.push(j.inv_t());
                    points.push(bilinear_map(&cell.vertices, xi, eta));
                }
            }
            geometry.push(CellGeometry {
                jxw,
                inv_t,
                points,
                mixed2: bilinear_mixed_second(&cell.vertices),
                diameter: cell.diameter(),
            });
        }
        KernelBase {
            layout,
            locals,
            geometry,
            tables,
            n_q: n_q_per_cell,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.locals.len()
    }

    pub fn table(&self, pos: usize, comp: usize) -> &Tables1d {
        let p = self.layout.space(comp).degree(pos);
        &self.tables[&(p, self.n_q[pos])]
    }

    /// Gather with homogeneous constraint expansion (linear-operator mode).
    pub fn gather(&self, pos: usize, x: &[Scalar], out: &mut Vec<Scalar>) {
        out.clear();
        for &(c, d) in &self.locals[pos] {
            let (c, d) = (c as usize, d as usize);
            let off = self.layout.offset(c);
            match self.layout.constraints(c).get(d) {
                Some(con) => {
                    let mut v = 0.0;
                    for &(j, cj) in &con.terms {
                        v += cj * x[off + j];
                    }
                    out.push(v);
                }
                None => out.push(x[off + d]),
            }
        }
    }

    /// Gather raw values (nonlinear-residual mode; the state carries its
    /// inhomogeneous boundary values).
    pub fn gather_direct(&self, pos: usize, x: &[Scalar], out: &mut Vec<Scalar>) {
        out.clear();
        for &(c, d) in &self.locals[pos] {
            out.push(x[self.layout.offset(c as usize) + d as usize]);
        }
    }

    /// Scatter-add with transposed constraint distribution.
    pub fn scatter(&self, pos: usize, y_loc: &[Scalar], y: &mut [Scalar]) {
        for (i, &(c, d)) in self.locals[pos].iter().enumerate() {
            let (c, d) = (c as usize, d as usize);
            let off = self.layout.offset(c);
            match self.layout.constraints(c).get(d) {
                Some(con) => {
                    for &(j, cj) in &con.terms {
                        y[off + j] += cj * y_loc[i];
                    }
                }
                None => y[off + d] += y_loc[i],
            }
        }
    }

    /// Set y_i = x_i on all constrained rows.
    pub fn identity_rows(&self, x: &[Scalar], y: &mut [Scalar]) {
        for c in 0..self.layout.n_components() {
            let off = self.layout.offset(c);
            for (&d, _) in self.layout.constraints(c).iter() {
                y[off + d] = x[off + d];
            }
        }
    }
}

/// A square operator expressed as a loop over cell-local kernels.
pub trait CellKernel: Send + Sync {
    fn base(&self) -> &KernelBase;
    fn apply_cell(&self, pos: usize, x_loc: &[Scalar], y_loc: &mut [Scalar]);

    /// Whether constrained rows act as identity (standalone operators) or
    /// are left zero (parts combined into a bigger operator).
    fn constrained_identity(&self) -> bool {
        true
    }
}

/// Apply with raw value gathers and transposed-constraint scatter, without
/// identity rows: the inhomogeneous boundary-lift action C^T K x.
pub fn kernel_apply_direct<K: CellKernel>(k: &K, x: &[Scalar], y: &mut [Scalar]) {
    let base = k.base();
    assert_eq!(x.len(), base.layout.n_dofs());
    assert_eq!(y.len(), base.layout.n_dofs());
    y.iter_mut().for_each(|v| *v = 0.0);
    let mut x_loc = Vec::new();
    let mut y_loc = Vec::new();
    for pos in 0..base.n_cells() {
        base.gather_direct(pos, x, &mut x_loc);
        y_loc.clear();
        y_loc.resize(x_loc.len(), 0.0);
        k.apply_cell(pos, &x_loc, &mut y_loc);
        base.scatter(pos, &y_loc, y);
    }
}

pub fn kernel_apply<K: CellKernel>(k: &K, x: &[Scalar], y: &mut [Scalar]) {
    let base = k.base();
    assert_eq!(x.len(), base.layout.n_dofs());
    assert_eq!(y.len(), base.layout.n_dofs());
    y.iter_mut().for_each(|v| *v = 0.0);
    let mut x_loc = Vec::new();
    let mut y_loc = Vec::new();
    for pos in 0..base.n_cells() {
        base.gather(pos, x, &mut x_loc);
        y_loc.clear();
        y_loc.resize(x_loc.len(), 0.0);
        k.apply_cell(pos, &x_loc, &mut y_loc);
        base.scatter(pos, &y_loc, y);
    }
    if k.constrained_identity() {
        base.identity_rows(x, y);
    }
}

/// Raw local matrix of one cell (no constraint resolution), by applying the
/// cell kernel to local unit vectors.
pub fn cell_matrix<K: CellKernel>(k: &K, pos: usize) -> DenseMatrix<Scalar> {
    let n = k.base().locals[pos].len();
    let mut m = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        col.iter_mut().for_each(|v| *v = 0.0);
        k.apply_cell(pos, &e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Masters of a local dof under the constraint expansion.
fn masters(base: &KernelBase, c: usize, d: usize) -> Vec<(usize, Scalar)> {
    let off = base.layout.offset(c);
    match base.layout.constraints(c).get(d) {
        Some(con) => con.terms.iter().map(|&(j, cj)| (off + j, cj)).collect(),
        None => vec![(off + d, 1.0)],
    }
}

/// Assemble the full operator (including constraint resolution and identity
/// rows) as a sparse matrix. Matches `kernel_apply` on any vector.
pub fn assemble_sparse<K: CellKernel>(k: &K) -> CsrMatrix<Scalar> {
    let base = k.base();
    let n = base.layout.n_dofs();
    let mut t = Triplets::new(n, n);
    for pos in 0..base.n_cells() {
        let m = cell_matrix(k, pos);
        let loc = &base.locals[pos];
        let row_masters: Vec<Vec<(usize, Scalar)>> = loc
            .iter()
            .map(|&(c, d)| masters(base, c as usize, d as usize))
            .collect();
        for (i, mi) in row_masters.iter().enumerate() {
            for (j, mj) in row_masters.iter().enumerate() {
                let v = m[(i, j)];
                if v == 0.0 {
                    continue;
                }
                for &(gi, ci) in mi {
                    for &(gj, cj) in mj {
                        t.push(gi, gj, ci * cj * v);
                    }
                }
            }
        }
    }
    if k.constrained_identity() {
        for c in 0..base.layout.n_components() {
            let off = base.layout.offset(c);
            for (&d, _) in base.layout.constraints(c).iter() {
                t.push(off + d, off + d, 1.0);
            }
        }
    }
    t.to_csr()
}

/// Weak right-hand side b_i = int f_c phi_i for the components where a
/// function is given, with constraint-transposed scatter and zeroed
/// constrained rows.
pub fn assemble_rhs(
    base: &KernelBase,
    fns: &[Option<&dyn Fn([Scalar; 2]) -> Scalar>],
) -> Vec<Scalar> {
    let layout = &base.layout;
    assert_eq!(fns.len(), layout.n_components());
    let mut b = vec![0.0; layout.n_dofs()];
    for pos in 0..base.n_cells() {
        let geo = &base.geometry[pos];
        let mut y_loc = vec![0.0; base.locals[pos].len()];
        let mut off = 0;
        for c in 0..layout.n_components() {
            let t = base.table(pos, c);
            let ev = crate::disc::tables::TensorEval::new(t);
            let n_loc = t.n_nodes() * t.n_nodes();
            if let Some(f) = fns[c] {
                let n_pts = ev.n_points();
                let vals: Vec<Scalar> = (0..n_pts)
                    .map(|q| f(geo.points[q]) * geo.jxw[q])
                    .collect();
                let zero_g = vec![[0.0; 2]; n_pts];
                ev.integrate(&vals, &zero_g, &mut y_loc[off..off + n_loc]);
            }
            off += n_loc;
        }
        base.scatter(pos, &y_loc, &mut b);
    }
    layout.zero_constrained(&mut b);
    b
}

/// Diagonal of the assembled operator without forming it.
pub fn compute_diagonal<K: CellKernel>(k: &K) -> Vec<Scalar> {
    let base = k.base();
    let n = base.layout.n_dofs();
    let mut diag = vec![0.0; n];
    for pos in 0..base.n_cells() {
        let m = cell_matrix(k, pos);
        let loc = &base.locals[pos];
        let row_masters: Vec<Vec<(usize, Scalar)>> = loc
            .iter()
            .map(|&(c, d)| masters(base, c as usize, d as usize))
            .collect();
        for (i, mi) in row_masters.iter().enumerate() {
            for (j, mj) in row_masters.iter().enumerate() {
                let v = m[(i, j)];
                if v == 0.0 {
                    continue;
                }
                for &(gi, ci) in mi {
                    for &(gj, cj) in mj {
                        if gi == gj {
                            diag[gi] += ci * cj * v;
                        }
                    }
                }
            }
        }
    }
    if k.constrained_identity() {
        for c in 0..base.layout.n_components() {
            let off = base.layout.offset(c);
            for (&d, _) in base.layout.constraints(c).iter() {
                diag[off + d] = 1.0;
            }
        }
    }
    diag
}

#[cfg(test)]
mod op_tests;
