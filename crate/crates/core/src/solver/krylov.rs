//! Krylov solvers: preconditioned CG, right-preconditioned GMRES with
//! restart, and flexible GMRES for preconditioners that vary per iteration.

use crate::error::{Error, Result};
use crate::la::{axpy, dot, norm2};
use crate::num::Scalar;
use crate::op::LinearOperator;

pub trait Preconditioner: Send + Sync {
    fn apply_to(&self, r: &[Scalar], z: &mut [Scalar]);
}

pub struct IdentityPrecond;

impl Preconditioner for IdentityPrecond {
    fn apply_to(&self, r: &[Scalar], z: &mut [Scalar]) {
        z.copy_from_slice(r);
    }
}

impl Preconditioner for crate::mg::Multigrid {
    fn apply_to(&self, r: &[Scalar], z: &mut [Scalar]) {
        self.apply_preconditioner(r, z);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovConfig {
    pub rtol: Scalar,
    pub atol: Scalar,
    pub max_iter: usize,
    pub restart: usize,
}

impl KrylovConfig {
    pub fn new(rtol: Scalar, max_iter: usize) -> KrylovConfig {
        KrylovConfig {
            rtol,
            atol: 1e-300,
            max_iter,
            restart: 60,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rtol <= 0.0 || self.atol <= 0.0 {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if self.restart < 1 {
            return Err(Error::Invalid("restart must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residuals: Vec<Scalar>,
    pub converged: bool,
}

/// Preconditioned conjugate gradients.
pub fn solve_cg(
    op: &dyn LinearOperator,
    precond: Option<&dyn Preconditioner>,
    b: &[Scalar],
    x0: &[Scalar],
    cfg: &KrylovConfig,
) -> Result<(Vec<Scalar>, SolveStats)> {
    cfg.validate()?;
    let n = op.n();
    assert_eq!(b.len(), n);
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = (cfg.rtol * norm2(b)).max(cfg.atol);
    let mut stats = SolveStats {
        residuals: vec![norm2(&r)],
        ..Default::default()
    };
    if stats.residuals[0] <= target {
        stats.converged = true;
        return Ok((x, stats));
    }
    let mut z = vec![0.0; n];
    match precond {
        Some(p) => p.apply_to(&r, &mut z),
        None => z.copy_from_slice(&r),
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..cfg.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 {
            return Err(Error::Breakdown { iteration: it });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rnorm = norm2(&r);
        stats.residuals.push(rnorm);
        stats.iterations = it + 1;
        if rnorm <= target {
            stats.converged = true;
            return Ok((x, stats));
        }
        match precond {
            Some(pc) => pc.apply_to(&r, &mut z),
            None => z.copy_from_slice(&r),
        }
        let rz_new = dot(&r, &z);
        if rz == 0.0 {
            return Err(Error::Breakdown { iteration: it });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, stats))
}

enum GmresKind {
    Right,
    Flexible,
}

/// Right-preconditioned GMRES(restart).
pub fn solve_gmres(
    op: &dyn LinearOperator,
    precond: Option<&dyn Preconditioner>,
    b: &[Scalar],
    x0: &[Scalar],
    cfg: &KrylovConfig,
) -> Result<(Vec<Scalar>, SolveStats)> {
    gmres_impl(op, precond, b, x0, cfg, GmresKind::Right)
}

/// Flexible GMRES: stores the preconditioned directions so the
/// preconditioner may change between iterations (inexact inner solves).
pub fn solve_fgmres(
    op: &dyn LinearOperator,
    precond: Option<&dyn Preconditioner>,
    b: &[Scalar],
    x0: &[Scalar],
    cfg: &KrylovConfig,
) -> Result<(Vec<Scalar>, SolveStats)> {
    gmres_impl(op, precond, b, x0, cfg, GmresKind::Flexible)
}

fn gmres_impl(
    op: &dyn LinearOperator,
    precond: Option<&dyn Preconditioner>,
    b: &[Scalar],
    x0: &[Scalar],
    cfg: &KrylovConfig,
    kind: GmresKind,
) -> Result<(Vec<Scalar>, SolveStats)> {
    cfg.validate()?;
    let n = op.n();
    assert_eq!(b.len(), n);
    let mut x = x0.to_vec();
    let target = (cfg.rtol * norm2(b)).max(cfg.atol);
    let mut stats = SolveStats::default();
    let mut total_it = 0usize;

    'outer: loop {
        let mut r = vec![0.0; n];
        op.apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm2(&r);
        if stats.residuals.is_empty() {
            stats.residuals.push(beta);
        }
        if beta <= target {
            stats.converged = true;
            break;
        }
        if total_it >= cfg.max_iter {
            break;
        }
        let m = cfg.restart;
        let mut v: Vec<Vec<Scalar>> = Vec::with_capacity(m + 1);
        let mut z_basis: Vec<Vec<Scalar>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0 as Scalar; m]; m + 1];
        let mut cs = vec![0.0 as Scalar; m];
        let mut sn = vec![0.0 as Scalar; m];
        let mut g = vec![0.0 as Scalar; m + 1];
        g[0] = beta;
        let mut v0 = r.clone();
        crate::la::scale(1.0 / beta, &mut v0);
        v.push(v0);
        let mut k_used = 0;

        for k in 0..m {
            if total_it >= cfg.max_iter {
                break;
            }
            // z = M^{-1} v_k, w = A z
            let mut z = vec![0.0; n];
            match precond {
                Some(p) => p.apply_to(&v[k], &mut z),
                None => z.copy_from_slice(&v[k]),
            }
            let mut w = vec![0.0; n];
            op.apply(&z, &mut w);
            if matches!(kind, GmresKind::Flexible) {
                z_basis.push(z);
            } else {
                drop(z);
            }
            // modified Gram-Schmidt
            for (j, vj) in v.iter().enumerate().take(k + 1) {
                h[j][k] = dot(&w, vj);
                axpy(-h[j][k], vj, &mut w);
            }
            h[k + 1][k] = norm2(&w);
            let happy = h[k + 1][k] < 1e-14 * g[0].max(1.0);
            if !happy {
                crate::la::scale(1.0 / h[k + 1][k], &mut w);
                v.push(w);
            }
            // apply stored Givens rotations
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                return Err(Error::Breakdown { iteration: total_it });
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total_it += 1;
            k_used = k + 1;
            stats.iterations = total_it;
            stats.residuals.push(g[k + 1].abs());
            if g[k + 1].abs() <= target || happy {
                break;
            }
        }
        // solve the triangular system and update x
        let mut y = vec![0.0 as Scalar; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            if h[i][i] == 0.0 {
                return Err(Error::Breakdown { iteration: total_it });
            }
            y[i] = s / h[i][i];
        }
        match kind {
            GmresKind::Flexible => {
                for (j, zj) in z_basis.iter().enumerate().take(k_used) {
                    axpy(y[j], zj, &mut x);
                }
            }
            GmresKind::Right => {
                // x += M^{-1} (V_k y)
                let mut vy = vec![0.0; n];
                for (j, vj) in v.iter().enumerate().take(k_used) {
                    axpy(y[j], vj, &mut vy);
                }
                let mut z = vec![0.0; n];
                match precond {
                    Some(p) => p.apply_to(&vy, &mut z),
                    None => z.copy_from_slice(&vy),
                }
                for i in 0..n {
                    x[i] += z[i];
                }
            }
        }
        if total_it >= cfg.max_iter {
            // recompute the true residual for the report
            let mut r = vec![0.0; n];
            op.apply(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            stats.converged = norm2(&r) <= target;
            break 'outer;
        }
    }
    Ok((x, stats))
}
