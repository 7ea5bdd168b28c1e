//! Variational DG(k) time discretization of the transient Stokes equations:
//! temporal matrices, matrix-free Kronecker stage systems over one slab,
//! slab right-hand sides, slab marching, and the hp space-time multigrid
//! preconditioner with its cell-patch additive-Schwarz smoother.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::la::{CsrMatrix, DenseMatrix, LuFactor, Triplets};
use crate::mg::hierarchy::LevelChain;
use crate::mg::smoother::{AsmPatches, Smoother, SmootherConfig};
use crate::mg::{Injection, MgLevel, MgOperator, Multigrid};
use crate::num::Scalar;
use crate::op::LinearOperator;
use crate::poly::LagrangeBasis;
use crate::quad::{gauss_legendre, gauss_radau_right_points};
use crate::transfer::{temporal_embedding, LevelTransfer, MultivectorTransfer};

/// DG(k) temporal matrices on the reference slab (0, 1], built on the
/// Lagrange basis at the right Gauss-Radau points:
///   M_Q[i][j] = int phi_i phi_j,
///   A_Q[i][j] = int phi_j' phi_i + phi_i(0+) phi_j(0+),
///   m_Q[i]    = phi_i(0+),
///   G_Q       = M_Q^{-1} A_Q.
#[derive(Clone, Debug)]
pub struct TemporalBasis {
    pub k: usize,
    pub nodes: Vec<Scalar>,
    pub m_q: DenseMatrix<Scalar>,
    pub a_q: DenseMatrix<Scalar>,
    pub jump: Vec<Scalar>,
    pub g_q: DenseMatrix<Scalar>,
    /// M_Q^{-1} m_Q, the mass-scaled jump weights of the slab hand-off
    pub jump_scaled: Vec<Scalar>,
    /// M_Q^{-1} applied from the left to the raw stage loads
    m_lu: LuFactorWrap,
}

#[derive(Clone, Debug)]
struct LuFactorWrap(Arc<LuFactor<Scalar>>);

impl TemporalBasis {
    pub fn new(k: usize) -> TemporalBasis {
        let q = k + 1;
        let nodes = gauss_radau_right_points::<Scalar>(q);
        let basis = LagrangeBasis::new(nodes.clone());
        // quadrature exact beyond degree 2k+1
        let rule = gauss_legendre::<Scalar>(k + 2);
        let mut m_q = DenseMatrix::zeros(q, q);
        let mut a_q = DenseMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                let mass = rule.integrate(|s| basis.value(i, s) * basis.value(j, s));
                let stiff = rule.integrate(|s| basis.derivative(j, s) * basis.value(i, s));
                m_q[(i, j)] = mass;
                a_q[(i, j)] = stiff + basis.value(i, 0.0) * basis.value(j, 0.0);
            }
        }
        let jump: Vec<Scalar> = (0..q).map(|i| basis.value(i, 0.0)).collect();
        let m_lu = Arc::new(m_q.lu().expect("temporal mass is SPD"));
        // G = M^{-1} A, column by column
        let mut g_q = DenseMatrix::zeros(q, q);
        for j in 0..q {
            let col: Vec<Scalar> = (0..q).map(|i| a_q[(i, j)]).collect();
            let g = m_lu.solve(&col);
            for i in 0..q {
                g_q[(i, j)] = g[i];
            }
        }
        let jump_scaled = m_lu.solve(&jump);
        TemporalBasis {
            k,
            nodes,
            m_q,
            a_q,
            jump,
            g_q,
            jump_scaled,
            m_lu: LuFactorWrap(m_lu),
        }
    }

    pub fn stages(&self) -> usize {
        self.k + 1
    }

    /// Left-multiply a stage-major block vector by (M_Q^{-1} (x) I).
    pub fn mass_scale(&self, x: &mut [Scalar], n_space: usize) {
        let q = self.stages();
        assert_eq!(x.len(), q * n_space);
        let mut rhs = vec![0.0; q];
        for d in 0..n_space {
            for s in 0..q {
                rhs[s] = x[s * n_space + d];
            }
            let sol = self.m_lu.0.solve(&rhs);
            for s in 0..q {
                x[s * n_space + d] = sol[s];
            }
        }
    }
}

/// The mass-scaled slab operator K = G_Q (x) M_sq + tau (I_Q (x) A_sq) on
/// stage-major block vectors, applied without materializing the Kronecker
/// product. Constrained spatial rows act as identity per stage.
pub struct SlabSystem {
    pub basis: Arc<TemporalBasis>,
    pub tau: Scalar,
    pub mass: Arc<dyn MgOperator>,
    pub stiffness: Arc<dyn MgOperator>,
    /// constrained spatial system dofs (identity rows per stage)
    pub constrained: Vec<usize>,
    n_space: usize,
}

impl SlabSystem {
    pub fn new(
        basis: Arc<TemporalBasis>,
        tau: Scalar,
        mass: Arc<dyn MgOperator>,
        stiffness: Arc<dyn MgOperator>,
        constrained: Vec<usize>,
    ) -> Result<SlabSystem> {
        if tau <= 0.0 {
            return Err(Error::NonPositiveTimeStep);
        }
        let n_space = mass.n();
        if stiffness.n() != n_space {
            return Err(Error::SizeMismatch {
                expected: n_space,
                got: stiffness.n(),
            });
        }
        Ok(SlabSystem {
            basis,
            tau,
            mass,
            stiffness,
            constrained,
            n_space,
        })
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn stages(&self) -> usize {
        self.basis.stages()
    }

    /// b_n = (M_Q^{-1} (x) I) raw stage loads + (M_Q^{-1} m_Q (x) M_sq) x_prev.
    /// `raw_loads` are the stage-major weak loads tau * int phi_i (f, v) dt;
    /// `x_prev_final` is the final stage of the previous slab (or the initial
    /// condition interpolant).
    pub fn slab_rhs(&self, raw_loads: &[Scalar], x_prev_final: &[Scalar]) -> Result<Vec<Scalar>> {
        let q = self.stages();
        let n = self.n_space;
        if raw_loads.len() != q * n || x_prev_final.len() != n {
            return Err(Error::SizeMismatch {
                expected: q * n,
                got: raw_loads.len(),
            });
        }
        let mut b = raw_loads.to_vec();
        self.basis.mass_scale(&mut b, n);
        let mut m_prev = vec![0.0; n];
        self.mass.apply(x_prev_final, &mut m_prev);
        for s in 0..q {
            let w = self.basis.jump_scaled[s];
            for d in 0..n {
                b[s * n + d] += w * m_prev[d];
            }
        }
        Ok(b)
    }
}

impl LinearOperator for SlabSystem {
    fn n(&self) -> usize {
        self.stages() * self.n_space
    }

    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        let q = self.stages();
        let n = self.n_space;
        assert_eq!(x.len(), q * n);
        assert_eq!(y.len(), q * n);
        // stage-wise M and A actions
        let mut mx = vec![0.0; q * n];
        let mut ax = vec![0.0; n];
        for s in 0..q {
            self.mass.apply(&x[s * n..(s + 1) * n], &mut mx[s * n..(s + 1) * n]);
        }
        for s in 0..q {
            self.stiffness.apply(&x[s * n..(s + 1) * n], &mut ax);
            // dense G mix across stages plus the tau-scaled stiffness
            for d in 0..n {
                let mut v = self.tau * ax[d];
                for s2 in 0..q {
                    let g = self.basis.g_q[(s, s2)];
                    if g != 0.0 {
                        v += g * mx[s2 * n + d];
                    }
                }
                y[s * n + d] = v;
            }
        }
        for s in 0..q {
            for &c in &self.constrained {
                y[s * n + c] = x[s * n + c];
            }
        }
    }
}

impl SlabSystem {
    /// Stage-wise boundary-lift action with raw value gathers.
    pub fn apply_direct(&self, x: &[Scalar], y: &mut [Scalar]) {
        let q = self.stages();
        let n = self.n_space;
        let mut mx = vec![0.0; q * n];
        let mut ax = vec![0.0; n];
        for s in 0..q {
            self.mass
                .apply_direct(&x[s * n..(s + 1) * n], &mut mx[s * n..(s + 1) * n]);
        }
        for s in 0..q {
            self.stiffness.apply_direct(&x[s * n..(s + 1) * n], &mut ax);
            for d in 0..n {
                let mut v = self.tau * ax[d];
                for s2 in 0..q {
                    let g = self.basis.g_q[(s, s2)];
                    if g != 0.0 {
                        v += g * mx[s2 * n + d];
                    }
                }
                y[s * n + d] = v;
            }
        }
    }
}

impl MgOperator for SlabSystem {
    fn apply_direct(&self, x: &[Scalar], y: &mut [Scalar]) {
        SlabSystem::apply_direct(self, x, y);
    }

    fn diagonal(&self) -> Vec<Scalar> {
        let q = self.stages();
        let n = self.n_space;
        let dm = self.mass.diagonal();
        let da = self.stiffness.diagonal();
        let mut diag = vec![0.0; q * n];
        for s in 0..q {
            let g = self.basis.g_q[(s, s)];
            for d in 0..n {
                diag[s * n + d] = g * dm[d] + self.tau * da[d];
            }
            for &c in &self.constrained {
                diag[s * n + c] = 1.0;
            }
        }
        diag
    }

    fn assemble(&self) -> CsrMatrix<Scalar> {
        let q = self.stages();
        let n = self.n_space;
        let m_sp = self.mass.assemble();
        let a_sp = self.stiffness.assemble();
        let mut t = Triplets::new(q * n, q * n);
        let is_constrained = {
            let mut v = vec![false; n];
            for &c in &self.constrained {
                v[c] = true;
            }
            v
        };
        for s1 in 0..q {
            for i in 0..n {
                if is_constrained[i] {
                    continue;
                }
                for s2 in 0..q {
                    let g = self.basis.g_q[(s1, s2)];
                    if g != 0.0 {
                        for (j, v) in m_sp.row_entries(i) {
                            t.push(s1 * n + i, s2 * n + j, g * v);
                        }
                    }
                }
                for (j, v) in a_sp.row_entries(i) {
                    t.push(s1 * n + i, s1 * n + j, self.tau * v);
                }
            }
            for &c in &self.constrained {
                t.push(s1 * n + c, s1 * n + c, 1.0);
            }
        }
        t.to_csr()
    }
}

/// Cell patches over one slab: all unconstrained system dofs of a spatial
/// cell, across all Q stages.
pub fn st_cell_patches(level: &crate::mg::LevelSpaces, q: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let (spatial, cells) = crate::mg::hierarchy::build_patch_dofs(
        level,
        crate::mg::hierarchy::PatchRule::Cells,
    );
    let n_space = level.n_dofs();
    let patches = spatial
        .into_iter()
        .map(|dofs| {
            let mut out = Vec::with_capacity(q * dofs.len());
            for s in 0..q {
                out.extend(dofs.iter().map(|&d| s * n_space + d));
            }
            out
        })
        .collect();
    (patches, cells)
}

/// Temporal level transfer in the mass-scaled stage formulation: the
/// prolongation is the basis embedding (P_tau (x) I), while the coarse
/// defect picks up the scaling change between levels,
/// R = (M_c^{-1} P_tau^T M_f) (x) I, so the coarse stage system stays the
/// Galerkin restriction of the fine one.
struct ScaledTemporalTransfer {
    p_tau: DenseMatrix<Scalar>,
    n_space: usize,
    fine: Arc<TemporalBasis>,
    coarse: Arc<TemporalBasis>,
}

impl LevelTransfer for ScaledTemporalTransfer {
    fn n_coarse(&self) -> usize {
        self.p_tau.cols() * self.n_space
    }
    fn n_fine(&self) -> usize {
        self.p_tau.rows() * self.n_space
    }
    fn prolongate(&self, x_c: &[Scalar], x_f: &mut [Scalar]) -> Result<()> {
        crate::transfer::prolongate_temporal(&self.p_tau, self.n_space, x_c, x_f)
    }
    fn restrict(&self, y_f: &[Scalar], y_c: &mut [Scalar]) -> Result<()> {
        let (qf, qc) = (self.p_tau.rows(), self.p_tau.cols());
        if y_f.len() != qf * self.n_space || y_c.len() != qc * self.n_space {
            return Err(Error::SizeMismatch {
                expected: qf * self.n_space,
                got: y_f.len(),
            });
        }
        // w = M_f y_f (stage mixing), z = P^T w, y_c = M_c^{-1} z
        let n = self.n_space;
        let mut w = vec![0.0; qf * n];
        for i in 0..qf {
            for j in 0..qf {
                let m = self.fine.m_q[(i, j)];
                if m != 0.0 {
                    for d in 0..n {
                        w[i * n + d] += m * y_f[j * n + d];
                    }
                }
            }
        }
        y_c.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..qf {
            for j in 0..qc {
                let c = self.p_tau[(i, j)];
                if c != 0.0 {
                    for d in 0..n {
                        y_c[j * n + d] += c * w[i * n + d];
                    }
                }
            }
        }
        self.coarse.mass_scale(y_c, n);
        Ok(())
    }
}

/// Temporal degree sequence fine-to-coarse under rule R2: k -> ceil(k/2),
/// with 1 -> 0 so the chain terminates at DG(0).
pub fn temporal_chain(k: usize) -> Vec<usize> {
    let mut ks = vec![k];
    let mut cur = k;
    while cur > 0 {
        cur = if cur == 1 { 0 } else { cur.div_ceil(2) };
        ks.push(cur);
    }
    ks
}

/// Level structure of the space-time hierarchy, coarse to fine.
pub struct StmgLevelInfo {
    pub spatial_level: usize,
    pub temporal_k: usize,
    pub n: usize,
}

/// Build the hp space-time multigrid preconditioner for the slab operator.
///
/// Rules R1 (coarsen space before time) and R2 (polynomially before
/// geometrically) order the levels fine-to-coarse as: spatial p, spatial h,
/// temporal k (halving). In time-marching mode there is no tau-coarsening.
/// `make_ops` supplies the (mass, stiffness) pair per spatial level.
pub fn build_stmg(
    chain: &LevelChain,
    basis: &Arc<TemporalBasis>,
    tau: Scalar,
    make_ops: &mut dyn FnMut(
        usize,
        &crate::mg::LevelSpaces,
    ) -> Result<(Arc<dyn MgOperator>, Arc<dyn MgOperator>)>,
    smoother_cfg: &SmootherConfig,
) -> Result<(Multigrid, Vec<StmgLevelInfo>)> {
    let k = basis.k;
    let ks_fine_to_coarse = temporal_chain(k);
    let n_spatial = chain.levels.len();
    // bases per temporal degree
    let mut bases: Vec<Arc<TemporalBasis>> = Vec::new();
    for &kk in &ks_fine_to_coarse {
        if kk == k {
            bases.push(basis.clone());
        } else {
            bases.push(Arc::new(TemporalBasis::new(kk)));
        }
    }
    // level plan coarse -> fine: temporal chain (ascending k) on spatial
    // level 0, then spatial levels 1.. at the finest k
    let mut plan: Vec<(usize, usize)> = Vec::new(); // (spatial level, temporal index)
    for (ti, _) in ks_fine_to_coarse.iter().enumerate().rev() {
        plan.push((0, ti));
    }
    for sl in 1..n_spatial {
        plan.push((sl, 0)); // temporal index 0 = finest k
    }

    let mut levels: Vec<MgLevel> = Vec::new();
    let mut transfers: Vec<Arc<dyn LevelTransfer>> = Vec::new();
    let mut infos = Vec::new();
    let mut spatial_ops: Vec<Option<(Arc<dyn MgOperator>, Arc<dyn MgOperator>)>> =
        vec![None; n_spatial];
    for (pi, &(sl, ti)) in plan.iter().enumerate() {
        let spaces = &chain.levels[sl];
        if spatial_ops[sl].is_none() {
            spatial_ops[sl] = Some(make_ops(sl, spaces)?);
        }
        let (mass, stiff) = spatial_ops[sl].clone().unwrap();
        let b = bases[ti].clone();
        let q = b.stages();
        let slab = SlabSystem::new(
            b.clone(),
            tau,
            mass,
            stiff,
            spaces.constrained_dofs(),
        )?;
        let n = slab.n();
        // smoother: cell patches over the slab
        let (patch_dofs, patch_cells) = st_cell_patches(spaces, q);
        let matrix = slab.assemble();
        let patches = Arc::new(AsmPatches::build(&matrix, patch_dofs, &patch_cells)?);
        let smoother = Smoother::build(smoother_cfg, &slab, slab.diagonal(), Some(patches))?;
        // constrained rows replicated per stage
        let constrained: Vec<usize> = (0..q)
            .flat_map(|s| {
                spaces
                    .constrained_dofs()
                    .into_iter()
                    .map(move |c| s * spaces.n_dofs() + c)
            })
            .collect();
        levels.push(MgLevel {
            op: Box::new(slab),
            smoother,
            n,
            constrained,
        });
        infos.push(StmgLevelInfo {
            spatial_level: sl,
            temporal_k: ks_fine_to_coarse[ti],
            n,
        });
        // transfer from the previous level in the plan
        if pi > 0 {
            let (psl, pti) = plan[pi - 1];
            if psl == sl {
                // temporal prolongation from the coarser DG degree
                let p_tau = temporal_embedding(ks_fine_to_coarse[pti], ks_fine_to_coarse[ti]);
                transfers.push(Arc::new(ScaledTemporalTransfer {
                    p_tau,
                    n_space: spaces.n_dofs(),
                    fine: bases[ti].clone(),
                    coarse: bases[pti].clone(),
                }));
            } else {
                // spatial prolongation applied stage-wise
                transfers.push(Arc::new(MultivectorTransfer {
                    inner: chain.transfers[psl].clone(),
                    stages: q,
                }));
            }
        }
    }
    let n_system = levels.last().unwrap().n;
    let injection = Injection {
        entries: {
            // identity on unconstrained stage dofs of the finest level
            let spaces = chain.levels.last().unwrap();
            let n_sp = spaces.n_dofs();
            let constrained: std::collections::BTreeSet<usize> =
                spaces.constrained_dofs().into_iter().collect();
            let q = basis.stages();
            let mut e = Vec::new();
            let last = plan.len() - 1;
            for s in 0..q {
                for d in 0..n_sp {
                    if !constrained.contains(&d) {
                        e.push((s * n_sp + d, last, s * n_sp + d));
                    }
                }
            }
            e
        },
    };
    let mg = Multigrid::assemble(levels, transfers, injection, n_system)?;
    Ok((mg, infos))
}

#[derive(Clone, Debug, Default)]
pub struct SlabMarchStats {
    pub per_slab_iterations: Vec<usize>,
    pub total_iterations: usize,
}

impl SlabMarchStats {
    pub fn avg_linear(&self) -> Scalar {
        if self.per_slab_iterations.is_empty() {
            0.0
        } else {
            self.total_iterations as Scalar / self.per_slab_iterations.len() as Scalar
        }
    }
}

/// March `n_slabs` slabs of length tau: per slab assemble the right-hand
/// side, impose the stage boundary values, solve with GMRES preconditioned
/// by one V-cycle of the space-time hierarchy, and hand the final stage to
/// the next slab.
#[allow(clippy::too_many_arguments)]
pub fn march_slabs(
    system: &SlabSystem,
    mg: &Multigrid,
    initial: &[Scalar],
    n_slabs: usize,
    raw_loads: &mut dyn FnMut(usize, &[Scalar]) -> Vec<Scalar>,
    stage_bc: &mut dyn FnMut(usize, &mut [Scalar]),
    gmres: &crate::solver::KrylovConfig,
    mut on_slab: Option<&mut dyn FnMut(usize, &[Scalar])>,
) -> Result<SlabMarchStats> {
    let n = system.n_space();
    let q = system.stages();
    assert_eq!(initial.len(), n);
    let mut stats = SlabMarchStats::default();
    let mut prev = initial.to_vec();
    for slab in 0..n_slabs {
        // stage times and boundary lift
        let mut x_bc = vec![0.0; q * n];
        stage_bc(slab, &mut x_bc);
        let loads = raw_loads(slab, &prev);
        let mut b = system.slab_rhs(&loads, &prev)?;
        // b_eff = b - K x_bc with constrained rows pinned at zero correction;
        // the lift must act on the raw boundary values
        let mut kx = vec![0.0; q * n];
        system.apply_direct(&x_bc, &mut kx);
        for i in 0..q * n {
            b[i] -= kx[i];
        }
        for s in 0..q {
            for &c in &system.constrained {
                b[s * n + c] = 0.0;
            }
        }
        let x0 = vec![0.0; q * n];
        let (delta, st) = crate::solver::solve_gmres(system, Some(mg), &b, &x0, gmres)
            .map_err(|e| Error::Slab {
                slab,
                reason: Box::new(e),
            })?;
        if !st.converged {
            return Err(Error::Slab {
                slab,
                reason: Box::new(Error::Diverged(format!(
                    "slab GMRES stalled at {:?}",
                    st.residuals.last()
                ))),
            });
        }
        stats.per_slab_iterations.push(st.iterations);
        stats.total_iterations += st.iterations;
        let x: Vec<Scalar> = x_bc.iter().zip(&delta).map(|(a, b)| a + b).collect();
        // right-Radau basis: the final stage sits at the slab end
        prev.copy_from_slice(&x[(q - 1) * n..]);
        if let Some(cb) = on_slab.as_deref_mut() {
            cb(slab, &x);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod spacetime_tests;
