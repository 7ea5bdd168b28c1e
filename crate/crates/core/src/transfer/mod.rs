//! Two-level prolongation/restriction operators.
//!
//! Prolongation runs cell by cell over the coarse mesh: gather the coarse
//! dofs, resolve their constraints, apply the local embedding, and scatter
//! into the fine vector with inverse-multiplicity weights. Restriction is the
//! exact transpose of that composition. Geometric (h), polynomial (p),
//! multivector (stage-wise), and temporal variants share this structure.

use std::collections::HashMap;
use std::sync::Arc;

use crate::disc::{ConstraintSet, ScalarSpace};
use crate::error::{Error, Result};
use crate::la::DenseMatrix;
use crate::num::Scalar;
use crate::poly::LagrangeBasis;
use crate::quad::{gauss_lobatto_points, gauss_radau_right_points};

/// One fine cell covered by a coarse cell, with its tensor embedding.
struct Target {
    fine_pos: usize,
    ex: Arc<DenseMatrix<Scalar>>,
    ey: Arc<DenseMatrix<Scalar>>,
}

/// Spatial two-level transfer between scalar spaces.
pub struct ScalarTransfer {
    coarse: Arc<ScalarSpace>,
    fine: Arc<ScalarSpace>,
    targets: Vec<Vec<Target>>,
    /// inverse dof multiplicity on the fine side
    weights: Vec<Scalar>,
}

/// 1D embedding of the degree-`p_c` nodal basis onto the degree-`p_f` nodes
/// of a subinterval: full interval (`child = None`) or one half.
fn embedding_1d(p_c: usize, p_f: usize, child: Option<u32>) -> DenseMatrix<Scalar> {
    let basis = LagrangeBasis::new(gauss_lobatto_points::<Scalar>(p_c + 1));
    let fine_nodes = gauss_lobatto_points::<Scalar>(p_f + 1);
    let mut m = DenseMatrix::zeros(p_f + 1, p_c + 1);
    for (i, &t) in fine_nodes.iter().enumerate() {
        let s = match child {
            Some(c) => (c as Scalar + t) / 2.0,
            None => t,
        };
        for j in 0..=p_c {
            m[(i, j)] = basis.value(j, s);
        }
    }
    m
}

type EmbedCache = HashMap<(usize, usize, Option<u32>), Arc<DenseMatrix<Scalar>>>;

fn cached_embedding(
    cache: &mut EmbedCache,
    p_c: usize,
    p_f: usize,
    child: Option<u32>,
) -> Arc<DenseMatrix<Scalar>> {
    cache
        .entry((p_c, p_f, child))
        .or_insert_with(|| Arc::new(embedding_1d(p_c, p_f, child)))
        .clone()
}

impl ScalarTransfer {
    /// Geometric transfer: every coarse active cell is either active in the
    /// fine mesh or replaced by its four children. Coarse cells covered by
    /// neither (local-smoothing levels) transfer nothing.
    pub fn geometric(coarse: &Arc<ScalarSpace>, fine: &Arc<ScalarSpace>) -> Result<ScalarTransfer> {
        let cmesh = coarse.mesh();
        let fmesh = fine.mesh();
        let mut cache: EmbedCache = HashMap::new();
        let mut targets = Vec::with_capacity(cmesh.n_active());
        for (cpos, ccell) in cmesh.active_cells().enumerate() {
            let p_c = coarse.degree(cpos) as usize;
            let mut list = Vec::new();
            if let Some(fid) = fmesh.find(ccell.key) {
                if fmesh.cell(fid).is_active() {
                    let fpos = fmesh.active_position(fid).unwrap();
                    let p_f = fine.degree(fpos) as usize;
                    let e = cached_embedding(&mut cache, p_c, p_f, None);
                    list.push(Target {
                        fine_pos: fpos,
                        ex: e.clone(),
                        ey: e,
                    });
                    targets.push(list);
                    continue;
                }
            }
            let kids = ccell.key.children();
            let mut any = false;
            for (k, kid) in kids.iter().enumerate() {
                if let Some(fid) = fmesh.find(*kid) {
                    if fmesh.cell(fid).is_active() {
                        let fpos = fmesh.active_position(fid).unwrap();
                        let p_f = fine.degree(fpos) as usize;
                        let (dx, dy) = ((k % 2) as u32, (k / 2) as u32);
                        list.push(Target {
                            fine_pos: fpos,
                            ex: cached_embedding(&mut cache, p_c, p_f, Some(dx)),
                            ey: cached_embedding(&mut cache, p_c, p_f, Some(dy)),
                        });
                        any = true;
                    }
                }
            }
            if !any {
                // uncovered region of a local-smoothing pair
                list.clear();
            }
            targets.push(list);
        }
        Ok(ScalarTransfer::finish(coarse, fine, targets))
    }

    /// Polynomial transfer on a shared mesh; per-cell degrees may differ.
    pub fn polynomial(coarse: &Arc<ScalarSpace>, fine: &Arc<ScalarSpace>) -> Result<ScalarTransfer> {
        if coarse.mesh().n_active() != fine.mesh().n_active() {
            return Err(Error::Invalid(
                "polynomial transfer requires a shared mesh".into(),
            ));
        }
        let mut cache: EmbedCache = HashMap::new();
        let mut targets = Vec::with_capacity(coarse.mesh().n_active());
        for pos in 0..coarse.mesh().n_active() {
            let p_c = coarse.degree(pos) as usize;
            let p_f = fine.degree(pos) as usize;
            if p_f < p_c {
                return Err(Error::InvalidDegree(format!(
                    "fine degree {p_f} below coarse degree {p_c}"
                )));
            }
            let e = cached_embedding(&mut cache, p_c, p_f, None);
            targets.push(vec![Target {
                fine_pos: pos,
                ex: e.clone(),
                ey: e,
            }]);
        }
        Ok(ScalarTransfer::finish(coarse, fine, targets))
    }

    fn finish(
        coarse: &Arc<ScalarSpace>,
        fine: &Arc<ScalarSpace>,
        targets: Vec<Vec<Target>>,
    ) -> ScalarTransfer {
        let mut count = vec![0usize; fine.n_dofs()];
        for list in &targets {
            for t in list {
                for &d in fine.cell_dofs(t.fine_pos) {
                    count[d] += 1;
                }
            }
        }
        let weights = count
            .iter()
            .map(|&c| if c > 0 { 1.0 / c as Scalar } else { 0.0 })
            .collect();
        ScalarTransfer {
            coarse: coarse.clone(),
            fine: fine.clone(),
            targets,
            weights,
        }
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse.n_dofs()
    }

    pub fn n_fine(&self) -> usize {
        self.fine.n_dofs()
    }

    /// Apply the tensor embedding y = (ey (x) ex) x.
    fn embed(ex: &DenseMatrix<Scalar>, ey: &DenseMatrix<Scalar>, x: &[Scalar]) -> Vec<Scalar> {
        let (nfx, ncx) = (ex.rows(), ex.cols());
        let (nfy, ncy) = (ey.rows(), ey.cols());
        debug_assert_eq!(x.len(), ncx * ncy);
        // contract x direction, then y direction
        let mut tmp = vec![0.0; nfx * ncy];
        for b in 0..ncy {
            for i in 0..nfx {
                let mut s = 0.0;
                for a in 0..ncx {
                    s += ex[(i, a)] * x[b * ncx + a];
                }
                tmp[b * nfx + i] = s;
            }
        }
        let mut y = vec![0.0; nfx * nfy];
        for j in 0..nfy {
            for i in 0..nfx {
                let mut s = 0.0;
                for b in 0..ncy {
                    s += ey[(j, b)] * tmp[b * nfx + i];
                }
                y[j * nfx + i] = s;
            }
        }
        y
    }

    /// Transpose embedding x = (ey (x) ex)^T y.
    fn embed_t(ex: &DenseMatrix<Scalar>, ey: &DenseMatrix<Scalar>, y: &[Scalar]) -> Vec<Scalar> {
        let (nfx, ncx) = (ex.rows(), ex.cols());
        let (nfy, ncy) = (ey.rows(), ey.cols());
        debug_assert_eq!(y.len(), nfx * nfy);
        let mut tmp = vec![0.0; ncx * nfy];
        for j in 0..nfy {
            for a in 0..ncx {
                let mut s = 0.0;
                for i in 0..nfx {
                    s += ex[(i, a)] * y[j * nfx + i];
                }
                tmp[j * ncx + a] = s;
            }
        }
        let mut x = vec![0.0; ncx * ncy];
        for b in 0..ncy {
            for a in 0..ncx {
                let mut s = 0.0;
                for j in 0..nfy {
                    s += ey[(j, b)] * tmp[j * ncx + a];
                }
                x[b * ncx + a] = s;
            }
        }
        x
    }

    /// x_f += W S P C G x_c, cell by cell over the coarse mesh.
    pub fn prolongate(
        &self,
        coarse_cons: &ConstraintSet,
        x_c: &[Scalar],
        x_f: &mut [Scalar],
    ) -> Result<()> {
        if x_c.len() != self.n_coarse() || x_f.len() != self.n_fine() {
            return Err(Error::SizeMismatch {
                expected: self.n_coarse(),
                got: x_c.len(),
            });
        }
        x_f.iter_mut().for_each(|v| *v = 0.0);
        for (cpos, list) in self.targets.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            // gather with constraint resolution on the coarse side
            let x_loc: Vec<Scalar> = self
                .coarse
                .cell_dofs(cpos)
                .iter()
                .map(|&d| match coarse_cons.get(d) {
                    Some(con) => con.terms.iter().map(|&(j, c)| c * x_c[j]).sum(),
                    None => x_c[d],
                })
                .collect();
            for t in list {
                let y_loc = Self::embed(&t.ex, &t.ey, &x_loc);
                for (i, &d) in self.fine.cell_dofs(t.fine_pos).iter().enumerate() {
                    x_f[d] += self.weights[d] * y_loc[i];
                }
            }
        }
        Ok(())
    }

    /// Exact transpose of `prolongate`.
    pub fn restrict(
        &self,
        coarse_cons: &ConstraintSet,
        y_f: &[Scalar],
        y_c: &mut [Scalar],
    ) -> Result<()> {
        if y_f.len() != self.n_fine() || y_c.len() != self.n_coarse() {
            return Err(Error::SizeMismatch {
                expected: self.n_fine(),
                got: y_f.len(),
            });
        }
        y_c.iter_mut().for_each(|v| *v = 0.0);
        for (cpos, list) in self.targets.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let n_loc = self.coarse.cell_dofs(cpos).len();
            let mut acc = vec![0.0; n_loc];
            for t in list {
                let y_loc: Vec<Scalar> = self
                    .fine
                    .cell_dofs(t.fine_pos)
                    .iter()
                    .map(|&d| self.weights[d] * y_f[d])
                    .collect();
                let x_loc = Self::embed_t(&t.ex, &t.ey, &y_loc);
                for (i, v) in x_loc.iter().enumerate() {
                    acc[i] += v;
                }
            }
            for (i, &d) in self.coarse.cell_dofs(cpos).iter().enumerate() {
                match coarse_cons.get(d) {
                    Some(con) => {
                        for &(j, c) in &con.terms {
                            y_c[j] += c * acc[i];
                        }
                    }
                    None => y_c[d] += acc[i],
                }
            }
        }
        Ok(())
    }

    /// Cell-local interpolation of a fine state onto the coarse nodes
    /// (injection for nonlinear level states; not the transpose pair).
    pub fn interpolate_to_coarse(&self, x_f: &[Scalar], x_c: &mut [Scalar]) -> Result<()> {
        if x_f.len() != self.n_fine() || x_c.len() != self.n_coarse() {
            return Err(Error::SizeMismatch {
                expected: self.n_fine(),
                got: x_f.len(),
            });
        }
        x_c.iter_mut().for_each(|v| *v = 0.0);
        let mut count = vec![0.0; self.n_coarse()];
        for (cpos, list) in self.targets.iter().enumerate() {
            let p_c = self.coarse.degree(cpos) as usize;
            let cnodes = gauss_lobatto_points::<Scalar>(p_c + 1);
            for t in list {
                let p_f = self.fine.degree(t.fine_pos) as usize;
                let fbasis = LagrangeBasis::new(gauss_lobatto_points::<Scalar>(p_f + 1));
                let f_loc: Vec<Scalar> = self
                    .fine
                    .cell_dofs(t.fine_pos)
                    .iter()
                    .map(|&d| x_f[d])
                    .collect();
                // for every coarse node inside this target's (sub)cell,
                // evaluate the fine local field there
                let sub = subcell_of(self, cpos, t);
                for (b, &ty) in cnodes.iter().enumerate() {
                    for (a, &tx) in cnodes.iter().enumerate() {
                        let (in_x, lx) = param_in_sub(tx, sub.0);
                        let (in_y, ly) = param_in_sub(ty, sub.1);
                        if !in_x || !in_y {
                            continue;
                        }
                        let mut v = 0.0;
                        for jb in 0..=p_f {
                            for ja in 0..=p_f {
                                v += f_loc[jb * (p_f + 1) + ja]
                                    * fbasis.value(ja, lx)
                                    * fbasis.value(jb, ly);
                            }
                        }
                        let cd = self.coarse.cell_dofs(cpos)[b * (p_c + 1) + a];
                        x_c[cd] += v;
                        count[cd] += 1.0;
                    }
                }
            }
        }
        for (v, c) in x_c.iter_mut().zip(&count) {
            if *c > 0.0 {
                *v /= c;
            }
        }
        Ok(())
    }
}

/// Which subcell (per axis: None = full, Some(k) = half k) a target covers.
fn subcell_of(tr: &ScalarTransfer, cpos: usize, t: &Target) -> (Option<u32>, Option<u32>) {
    let cmesh = tr.coarse.mesh();
    let fmesh = tr.fine.mesh();
    let ckey = cmesh.cell(cmesh.active_ids()[cpos]).key;
    let fkey = fmesh.cell(fmesh.active_ids()[t.fine_pos]).key;
    if fkey.level == ckey.level {
        (None, None)
    } else {
        (Some(fkey.gx % 2), Some(fkey.gy % 2))
    }
}

/// Map a coarse-cell parameter into a subcell's local parameter.
fn param_in_sub(t: Scalar, sub: Option<u32>) -> (bool, Scalar) {
    match sub {
        None => (true, t),
        Some(k) => {
            let lo = k as Scalar * 0.5;
            let hi = lo + 0.5;
            if t < lo - 1e-12 || t > hi + 1e-12 {
                (false, 0.0)
            } else {
                (true, ((t - lo) * 2.0).clamp(0.0, 1.0))
            }
        }
    }
}

/// Block transfer over stacked components (the [ux | uy | p] layout).
pub struct BlockTransfer {
    parts: Vec<(Arc<ScalarTransfer>, Arc<ConstraintSet>)>,
    coarse_offsets: Vec<usize>,
    fine_offsets: Vec<usize>,
    n_coarse: usize,
    n_fine: usize,
}

impl BlockTransfer {
    /// `parts`: per component, the scalar transfer and the coarse-side
    /// constraints of that component.
    pub fn new(parts: Vec<(Arc<ScalarTransfer>, Arc<ConstraintSet>)>) -> BlockTransfer {
        let mut coarse_offsets = Vec::new();
        let mut fine_offsets = Vec::new();
        let (mut nc, mut nf) = (0, 0);
        for (t, _) in &parts {
            coarse_offsets.push(nc);
            fine_offsets.push(nf);
            nc += t.n_coarse();
            nf += t.n_fine();
        }
        BlockTransfer {
            parts,
            coarse_offsets,
            fine_offsets,
            n_coarse: nc,
            n_fine: nf,
        }
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn prolongate(&self, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()> {
        for (k, (t, cons)) in self.parts.iter().enumerate() {
            let rc = self.coarse_offsets[k]..self.coarse_offsets[k] + t.n_coarse();
            let rf = self.fine_offsets[k]..self.fine_offsets[k] + t.n_fine();
            t.prolongate(cons, &x_c[rc], &mut x_f[rf])?;
        }
        Ok(())
    }

    pub fn restrict(&self, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()> {
        for (k, (t, cons)) in self.parts.iter().enumerate() {
            let rc = self.coarse_offsets[k]..self.coarse_offsets[k] + t.n_coarse();
            let rf = self.fine_offsets[k]..self.fine_offsets[k] + t.n_fine();
            t.restrict(cons, &y_f[rf], &mut y_c[rc])?;
        }
        Ok(())
    }

    pub fn interpolate_to_coarse(&self, x_f: &[Scalar], x_c: &mut [Scalar]) -> Result<()> {
        for (k, (t, _)) in self.parts.iter().enumerate() {
            let rc = self.coarse_offsets[k]..self.coarse_offsets[k] + t.n_coarse();
            let rf = self.fine_offsets[k]..self.fine_offsets[k] + t.n_fine();
            t.interpolate_to_coarse(&x_f[rf], &mut x_c[rc])?;
        }
        Ok(())
    }

    /// Stage-wise application: (I_Q (x) P_h) on a stage-major block vector.
    pub fn prolongate_multivector(&self, q: usize, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()> {
        if x_c.len() != q * self.n_coarse || x_f.len() != q * self.n_fine {
            return Err(Error::SizeMismatch {
                expected: q * self.n_coarse,
                got: x_c.len(),
            });
        }
        for s in 0..q {
            let rc = s * self.n_coarse..(s + 1) * self.n_coarse;
            let rf = s * self.n_fine..(s + 1) * self.n_fine;
            self.prolongate(&x_c[rc], &mut x_f[rf])?;
        }
        Ok(())
    }

    pub fn restrict_multivector(&self, q: usize, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()> {
        if y_f.len() != q * self.n_fine || y_c.len() != q * self.n_coarse {
            return Err(Error::SizeMismatch {
                expected: q * self.n_fine,
                got: y_f.len(),
            });
        }
        for s in 0..q {
            let rc = s * self.n_coarse..(s + 1) * self.n_coarse;
            let rf = s * self.n_fine..(s + 1) * self.n_fine;
            self.restrict(&y_f[rf], &mut y_c[rc])?;
        }
        Ok(())
    }
}

/// Temporal embedding P_tau from the DG(k_c) right-Radau Lagrange basis onto
/// the DG(k_f) nodes: P[i][j] = phi_j^{(k_c)}(t_i^{(k_f)}).
pub fn temporal_embedding(k_c: usize, k_f: usize) -> DenseMatrix<Scalar> {
    assert!(k_f >= k_c);
    let cnodes = gauss_radau_right_points::<Scalar>(k_c + 1);
    let fnodes = gauss_radau_right_points::<Scalar>(k_f + 1);
    let basis = LagrangeBasis::new(cnodes);
    let mut m = DenseMatrix::zeros(k_f + 1, k_c + 1);
    for (i, &t) in fnodes.iter().enumerate() {
        for j in 0..basis.len() {
            m[(i, j)] = basis.value(j, t);
        }
    }
    m
}

/// (P_tau (x) I_h) on a stage-major block vector.
pub fn prolongate_temporal(
    p_tau: &DenseMatrix<Scalar>,
    n_space: usize,
    x_c: &[Scalar],
    x_f: &mut [Scalar],
) -> Result<()> {
    let (qf, qc) = (p_tau.rows(), p_tau.cols());
    if x_c.len() != qc * n_space || x_f.len() != qf * n_space {
        return Err(Error::SizeMismatch {
            expected: qc * n_space,
            got: x_c.len(),
        });
    }
    x_f.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..qf {
        for j in 0..qc {
            let c = p_tau[(i, j)];
            if c == 0.0 {
                continue;
            }
            for d in 0..n_space {
                x_f[i * n_space + d] += c * x_c[j * n_space + d];
            }
        }
    }
    Ok(())
}

/// (P_tau (x) I_h)^T on a stage-major block vector.
pub fn restrict_temporal(
    p_tau: &DenseMatrix<Scalar>,
    n_space: usize,
    y_f: &[Scalar],
    y_c: &mut [Scalar],
) -> Result<()> {
    let (qf, qc) = (p_tau.rows(), p_tau.cols());
    if y_f.len() != qf * n_space || y_c.len() != qc * n_space {
        return Err(Error::SizeMismatch {
            expected: qf * n_space,
            got: y_f.len(),
        });
    }
    y_c.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..qf {
        for j in 0..qc {
            let c = p_tau[(i, j)];
            if c == 0.0 {
                continue;
            }
            for d in 0..n_space {
                y_c[j * n_space + d] += c * y_f[i * n_space + d];
            }
        }
    }
    Ok(())
}

/// Level-to-level transfer abstraction for multigrid drivers: plain spatial
/// block transfers, stage-wise multivector wrappers, and temporal stage
/// mixing all satisfy it.
pub trait LevelTransfer: Send + Sync {
    fn n_coarse(&self) -> usize;
    fn n_fine(&self) -> usize;
    fn prolongate(&self, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()>;
    fn restrict(&self, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()>;
}

impl LevelTransfer for BlockTransfer {
    fn n_coarse(&self) -> usize {
        BlockTransfer::n_coarse(self)
    }
    fn n_fine(&self) -> usize {
        BlockTransfer::n_fine(self)
    }
    fn prolongate(&self, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()> {
        BlockTransfer::prolongate(self, x_c, x_f)
    }
    fn restrict(&self, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()> {
        BlockTransfer::restrict(self, y_f, y_c)
    }
}

/// (I_Q (x) P_h): a spatial transfer applied stage by stage.
pub struct MultivectorTransfer {
    pub inner: std::sync::Arc<BlockTransfer>,
    pub stages: usize,
}

impl LevelTransfer for MultivectorTransfer {
    fn n_coarse(&self) -> usize {
        self.stages * self.inner.n_coarse()
    }
    fn n_fine(&self) -> usize {
        self.stages * self.inner.n_fine()
    }
    fn prolongate(&self, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()> {
        self.inner.prolongate_multivector(self.stages, x_c, x_f)
    }
    fn restrict(&self, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()> {
        self.inner.restrict_multivector(self.stages, y_f, y_c)
    }
}

/// (P_tau (x) I_h): temporal stage mixing over a fixed spatial space.
pub struct TemporalTransfer {
    pub p_tau: DenseMatrix<Scalar>,
    pub n_space: usize,
}

impl LevelTransfer for TemporalTransfer {
    fn n_coarse(&self) -> usize {
        self.p_tau.cols() * self.n_space
    }
    fn n_fine(&self) -> usize {
        self.p_tau.rows() * self.n_space
    }
    fn prolongate(&self, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()> {
        prolongate_temporal(&self.p_tau, self.n_space, x_c, x_f)
    }
    fn restrict(&self, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()> {
        restrict_temporal(&self.p_tau, self.n_space, y_f, y_c)
    }
}

#[cfg(test)]
mod transfer_tests;
