//! Level smoothers: point-Jacobi and additive-Schwarz point preconditioners,
//! wrapped by either plain relaxation or a Chebyshev semi-iteration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::la::{CsrMatrix, LuFactor, SplitMix64};
use crate::num::Scalar;
use crate::op::LinearOperator;

/// Inner point preconditioner of a relaxation/Chebyshev smoother.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerKind {
    Jacobi,
    /// Additive Schwarz on precomputed patches; dofs outside every patch
    /// fall back to point Jacobi.
    AsmBlend,
}

/// Acceleration wrapped around the inner preconditioner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Accel {
    /// x <- x + omega P^{-1} (b - A x), `iterations` times.
    Relaxation { iterations: usize },
    /// Chebyshev semi-iteration of the given degree on the interval
    /// [1.2 lambda_max / 20, 1.2 lambda_max].
    Chebyshev { degree: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmootherConfig {
    pub accel: Accel,
    pub inner: InnerKind,
    pub omega: Scalar,
    /// power-iteration count for the Chebyshev eigenvalue estimate
    pub eig_iterations: usize,
    /// Chebyshev target interval is [1.2 lambda / smoothing_range, 1.2 lambda]
    pub smoothing_range: Scalar,
}

impl SmootherConfig {
    pub fn jacobi(iterations: usize, omega: Scalar) -> SmootherConfig {
        SmootherConfig {
            accel: Accel::Relaxation { iterations },
            inner: InnerKind::Jacobi,
            omega,
            eig_iterations: 12,
            smoothing_range: 20.0,
        }
    }

    pub fn chebyshev_jacobi(degree: usize) -> SmootherConfig {
        SmootherConfig {
            accel: Accel::Chebyshev { degree },
            inner: InnerKind::Jacobi,
            omega: 1.0,
            eig_iterations: 12,
            smoothing_range: 20.0,
        }
    }

    pub fn chebyshev_jacobi_asm(degree: usize) -> SmootherConfig {
        SmootherConfig {
            accel: Accel::Chebyshev { degree },
            inner: InnerKind::AsmBlend,
            omega: 1.0,
            eig_iterations: 12,
            smoothing_range: 20.0,
        }
    }

    pub fn asm(iterations: usize, omega: Scalar) -> SmootherConfig {
        SmootherConfig {
            accel: Accel::Relaxation { iterations },
            inner: InnerKind::AsmBlend,
            omega,
            eig_iterations: 12,
            smoothing_range: 20.0,
        }
    }

    pub fn with_smoothing_range(mut self, range: Scalar) -> SmootherConfig {
        self.smoothing_range = range;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = match self.accel {
            Accel::Relaxation { iterations } => iterations,
            Accel::Chebyshev { degree } => degree,
        };
        if d < 1 {
            return Err(Error::Invalid("smoother degree/iterations must be >= 1".into()));
        }
        if !(self.omega > 0.0 && self.omega <= 2.0) {
            return Err(Error::Invalid("relaxation omega must be in (0, 2]".into()));
        }
        Ok(())
    }
}

/// Factorized additive-Schwarz patches over a level.
pub struct AsmPatches {
    /// per patch: dof set and LU of the submatrix
    patches: Vec<(Vec<usize>, LuFactor<Scalar>)>,
    /// inverse patch multiplicity per dof (0 where uncovered)
    weights: Vec<Scalar>,
    covered: Vec<bool>,
    /// restricted/hybrid mode: per patch and local dof, 2 = additive,
    /// 1 = owner write, 0 = skip (owned by another patch)
    owned: Option<Vec<Vec<i8>>>,
}

impl AsmPatches {
    /// Extract and factorize patch matrices from the assembled level matrix.
    /// `cell_of_patch` tags errors with the offending cell.
    pub fn build(
        matrix: &CsrMatrix<Scalar>,
        patch_dofs: Vec<Vec<usize>>,
        cell_of_patch: &[usize],
    ) -> Result<AsmPatches> {
        Self::build_mode(matrix, patch_dofs, cell_of_patch, None)
    }

    /// Restricted additive Schwarz: overlapping patch solves, but every dof
    /// takes its update from one owner patch only.
    pub fn build_restricted(
        matrix: &CsrMatrix<Scalar>,
        patch_dofs: Vec<Vec<usize>>,
        cell_of_patch: &[usize],
    ) -> Result<AsmPatches> {
        let n = matrix.rows();
        Self::build_mode(matrix, patch_dofs, cell_of_patch, Some(&vec![true; n]))
    }

    /// Hybrid mode: dofs flagged in `restrict_dofs` take their update from
    /// one owner patch; the rest are combined additively with inverse
    /// multiplicity weights. Saddle-point cell patches with a continuous
    /// pressure need the pressure rows owner-assigned or the averaged
    /// corrections break the local divergence balance.
    pub fn build_hybrid(
        matrix: &CsrMatrix<Scalar>,
        patch_dofs: Vec<Vec<usize>>,
        cell_of_patch: &[usize],
        restrict_dofs: &[bool],
    ) -> Result<AsmPatches> {
        Self::build_mode(matrix, patch_dofs, cell_of_patch, Some(restrict_dofs))
    }

    fn build_mode(
        matrix: &CsrMatrix<Scalar>,
        patch_dofs: Vec<Vec<usize>>,
        cell_of_patch: &[usize],
        restricted: Option<&[bool]>,
    ) -> Result<AsmPatches> {
        let n = matrix.rows();
        let mut weights = vec![0.0; n];
        let mut covered = vec![false; n];
        let mut patches = Vec::with_capacity(patch_dofs.len());
        let mut owned = restricted.map(|_| Vec::new());
        for (k, dofs) in patch_dofs.into_iter().enumerate() {
            if dofs.is_empty() {
                continue;
            }
            let sub = matrix.submatrix(&dofs);
            let lu = sub.lu().map_err(|_| Error::SingularPatch {
                cell: cell_of_patch.get(k).copied().unwrap_or(k),
            })?;
            if let Some(owned) = owned.as_mut() {
                let flags = restricted.unwrap();
                let mask: Vec<i8> = dofs
                    .iter()
                    .map(|&d| {
                        if !flags[d] {
                            2 // additive dof
                        } else if !covered[d] {
                            1 // owner
                        } else {
                            0 // covered elsewhere
                        }
                    })
                    .collect();
                owned.push(mask);
            }
            for &d in &dofs {
                weights[d] += 1.0;
                covered[d] = true;
            }
            patches.push((dofs, lu));
        }
        for w in weights.iter_mut() {
            if *w > 0.0 {
                *w = 1.0 / *w;
            }
        }
        Ok(AsmPatches {
            patches,
            weights,
            covered,
            owned,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }
}

/// Point preconditioner: z = P^{-1} r.
enum Inner {
    Jacobi {
        inv_diag: Vec<Scalar>,
    },
    Asm {
        patches: Arc<AsmPatches>,
        inv_diag: Vec<Scalar>,
    },
}

impl Inner {
    fn apply(&self, r: &[Scalar], z: &mut [Scalar]) {
        match self {
            Inner::Jacobi { inv_diag } => {
                for i in 0..r.len() {
                    z[i] = inv_diag[i] * r[i];
                }
            }
            Inner::Asm { patches, inv_diag } => {
                // Jacobi on uncovered dofs, weighted patch solves elsewhere
                for i in 0..r.len() {
                    z[i] = if patches.covered[i] {
                        0.0
                    } else {
                        inv_diag[i] * r[i]
                    };
                }
                match &patches.owned {
                    Some(owned) => {
                        for ((dofs, lu), mask) in patches.patches.iter().zip(owned) {
                            let rhs: Vec<Scalar> = dofs.iter().map(|&d| r[d]).collect();
                            let sol = lu.solve(&rhs);
                            for ((&d, &v), &own) in dofs.iter().zip(&sol).zip(mask) {
                                match own {
                                    2 => z[d] += patches.weights[d] * v,
                                    1 => z[d] = v,
                                    _ => {}
                                }
                            }
                        }
                    }
                    None => {
                        for (dofs, lu) in &patches.patches {
                            let rhs: Vec<Scalar> = dofs.iter().map(|&d| r[d]).collect();
                            let sol = lu.solve(&rhs);
                            for (&d, &v) in dofs.iter().zip(&sol) {
                                z[d] += patches.weights[d] * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A ready-to-run smoother for one level operator.
pub struct Smoother {
    inner: Inner,
    accel: Accel,
    omega: Scalar,
    /// Chebyshev interval bounds on the preconditioned spectrum.
    cheb_range: Option<(Scalar, Scalar)>,
}

impl Smoother {
    pub fn build(
        config: &SmootherConfig,
        op: &dyn LinearOperator,
        diagonal: Vec<Scalar>,
        patches: Option<Arc<AsmPatches>>,
    ) -> Result<Smoother> {
        config.validate()?;
        // zero diagonals are only acceptable where an ASM patch covers the dof
        // (saddle-point pressure rows)
        let check_zero = |covered: Option<&[bool]>| -> Result<Vec<Scalar>> {
            let mut inv = Vec::with_capacity(diagonal.len());
            for (i, &d) in diagonal.iter().enumerate() {
                if d == 0.0 {
                    if !covered.map(|c| c[i]).unwrap_or(false) {
                        return Err(Error::Invalid(format!(
                            "zero diagonal entry at dof {i}; cannot smooth"
                        )));
                    }
                    inv.push(0.0);
                } else {
                    inv.push(1.0 / d);
                }
            }
            Ok(inv)
        };
        let inner = match config.inner {
            InnerKind::Jacobi => Inner::Jacobi {
                inv_diag: check_zero(None)?,
            },
            InnerKind::AsmBlend => {
                let patches = patches.ok_or_else(|| {
                    Error::Invalid("ASM smoother requires precomputed patches".into())
                })?;
                let inv_diag = check_zero(Some(&patches.covered))?;
                Inner::Asm { patches, inv_diag }
            }
        };
        let cheb_range = match config.accel {
            Accel::Chebyshev { .. } => {
                let lmax = estimate_lambda_max(op, &inner, config.eig_iterations);
                Some((1.2 * lmax / config.smoothing_range, 1.2 * lmax))
            }
            Accel::Relaxation { .. } => None,
        };
        Ok(Smoother {
            inner,
            accel: config.accel,
            omega: config.omega,
            cheb_range,
        })
    }

    /// One smoother application (its configured iterations/degree).
    pub fn smooth(&self, op: &dyn LinearOperator, x: &mut [Scalar], b: &[Scalar]) {
        match self.accel {
            Accel::Relaxation { iterations } => {
                let n = x.len();
                let mut r = vec![0.0; n];
                let mut z = vec![0.0; n];
                for _ in 0..iterations {
                    op.apply(x, &mut r);
                    for i in 0..n {
                        r[i] = b[i] - r[i];
                    }
                    self.inner.apply(&r, &mut z);
                    for i in 0..n {
                        x[i] += self.omega * z[i];
                    }
                }
            }
            Accel::Chebyshev { degree } => {
                self.chebyshev(op, x, b, degree);
            }
        }
    }

    /// Preconditioned Chebyshev semi-iteration targeting [a, b] = cheb_range.
    fn chebyshev(&self, op: &dyn LinearOperator, x: &mut [Scalar], b: &[Scalar], degree: usize) {
        let (lo, hi) = self.cheb_range.expect("chebyshev range estimated at build");
        let theta = 0.5 * (hi + lo);
        let delta = 0.5 * (hi - lo);
        let n = x.len();
        let mut r = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut d = vec![0.0; n];
        // first step
        op.apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        self.inner.apply(&r, &mut z);
        for i in 0..n {
            d[i] = z[i] / theta;
            x[i] += d[i];
        }
        let sigma = theta / delta;
        let mut rho_old = 1.0 / sigma;
        for _ in 1..degree {
            op.apply(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            self.inner.apply(&r, &mut z);
            let rho = 1.0 / (2.0 * sigma - rho_old);
            for i in 0..n {
                d[i] = rho * rho_old * d[i] + 2.0 * rho / delta * z[i];
                x[i] += d[i];
            }
            rho_old = rho;
        }
    }
}

/// Largest eigenvalue of P^{-1} A by power iteration with a deterministic
/// seed vector.
fn estimate_lambda_max(
    op: &dyn LinearOperator,
    inner: &Inner,
    iterations: usize,
) -> Scalar {
    let n = op.n();
    let mut rng = SplitMix64::new(0x5eed);
    let mut v: Vec<Scalar> = rng.vector(n);
    let mut av = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut lambda: Scalar = 1.0;
    for _ in 0..iterations {
        let nv = crate::la::norm2(&v);
        if nv == 0.0 {
            break;
        }
        crate::la::scale(1.0 / nv, &mut v);
        op.apply(&v, &mut av);
        inner.apply(&av, &mut z);
        lambda = crate::la::norm2(&z);
        std::mem::swap(&mut v, &mut z);
    }
    lambda.max(1e-12)
}

/// Public wrapper: estimate of the largest eigenvalue of diag(A)^{-1} A.
pub fn lambda_max_jacobi(op: &dyn LinearOperator, diagonal: &[Scalar], iterations: usize) -> Scalar {
    let inv_diag: Vec<Scalar> = diagonal
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    estimate_lambda_max(op, &Inner::Jacobi { inv_diag }, iterations)
}
