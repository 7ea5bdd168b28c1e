//! Precomputed 1D shape-function tables at quadrature points.

use crate::num::Scalar;
use crate::poly::LagrangeBasis;
use crate::quad::{gauss_legendre, gauss_lobatto_points, QuadratureRule};

/// Values and derivatives of the degree-p Gauss-Lobatto Lagrange basis at the
/// points of an n-point Gauss rule: `value[q][i] = phi_i(x_q)`.
#[derive(Clone, Debug)]
pub struct Tables1d {
    pub degree: usize,
    pub rule: QuadratureRule<Scalar>,
    pub basis: LagrangeBasis<Scalar>,
    pub value: Vec<Vec<Scalar>>,
    pub deriv: Vec<Vec<Scalar>>,
    pub deriv2: Vec<Vec<Scalar>>,
}

impl Tables1d {
    pub fn new(degree: usize, n_q: usize) -> Tables1d {
        let rule = gauss_legendre(n_q);
        let basis = LagrangeBasis::new(gauss_lobatto_points(degree + 1));
        let n = degree + 1;
        let mut value = Vec::with_capacity(n_q);
        let mut deriv = Vec::with_capacity(n_q);
        let mut deriv2 = Vec::with_capacity(n_q);
        for &x in &rule.points {
            value.push((0..n).map(|i| basis.value(i, x)).collect());
            deriv.push((0..n).map(|i| basis.derivative(i, x)).collect());
            deriv2.push((0..n).map(|i| basis.second_derivative(i, x)).collect());
        }
        Tables1d {
            degree,
            rule,
            basis,
            value,
            deriv,
            deriv2,
        }
    }

    pub fn n_q(&self) -> usize {
        self.rule.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.degree + 1
    }
}

/// Tensor evaluation of a scalar local vector on the 2D quadrature grid.
/// Quadrature points are indexed `q = qy * n_q + qx`.
pub struct TensorEval<'a> {
    pub t: &'a Tables1d,
}

impl<'a> TensorEval<'a> {
    pub fn new(t: &'a Tables1d) -> Self {
        TensorEval { t }
    }

    pub fn n_points(&self) -> usize {
        self.t.n_q() * self.t.n_q()
    }

    /// Values, reference gradients, and (optionally) reference second
    /// derivatives (u_xx, u_xy, u_yy) of the local field at all points.
    pub fn evaluate(
        &self,
        local: &[Scalar],
        values: &mut [Scalar],
        grads: &mut [[Scalar; 2]],
        second: Option<&mut [[Scalar; 3]]>,
    ) {
        let n = self.t.n_nodes();
        let nq = self.t.n_q();
        debug_assert_eq!(local.len(), n * n);
        // pass 1: contract x direction -> partial[qx][b] for value and d/dx
        let mut vx = vec![0.0; nq * n];
        let mut dx = vec![0.0; nq * n];
        let mut dxx = vec![0.0; nq * n];
        for b in 0..n {
            for qx in 0..nq {
                let mut v = 0.0;
                let mut d = 0.0;
                let mut d2 = 0.0;
                for a in 0..n {
                    let c = local[b * n + a];
                    v += c * self.t.value[qx][a];
                    d += c * self.t.deriv[qx][a];
                    d2 += c * self.t.deriv2[qx][a];
                }
                vx[qx * n + b] = v;
                dx[qx * n + b] = d;
                dxx[qx * n + b] = d2;
            }
        }
        // pass 2: contract y direction
        let mut sec = second;
        for qy in 0..nq {
            for qx in 0..nq {
                let mut v = 0.0;
                let mut gx = 0.0;
                let mut gy = 0.0;
                let mut hxx = 0.0;
                let mut hxy = 0.0;
                let mut hyy = 0.0;
                for b in 0..n {
                    let w = self.t.value[qy][b];
                    let wd = self.t.deriv[qy][b];
                    let wd2 = self.t.deriv2[qy][b];
                    v += vx[qx * n + b] * w;
                    gx += dx[qx * n + b] * w;
                    gy += vx[qx * n + b] * wd;
                    hxx += dxx[qx * n + b] * w;
                    hxy += dx[qx * n + b] * wd;
                    hyy += vx[qx * n + b] * wd2;
                }
                let q = qy * nq + qx;
                values[q] = v;
                grads[q] = [gx, gy];
                if let Some(s) = sec.as_mut() {
                    s[q] = [hxx, hxy, hyy];
                }
            }
        }
    }

    /// Transpose of `evaluate`: accumulate quadrature-point contributions
    /// tested against values and reference gradients into the local vector.
    pub fn integrate(
        &self,
        val_contrib: &[Scalar],
        grad_contrib: &[[Scalar; 2]],
        local: &mut [Scalar],
    ) {
        let n = self.t.n_nodes();
        let nq = self.t.n_q();
        // pass 1: contract y direction -> partial[qx][b]
        let mut pv = vec![0.0; nq * n];
        let mut pgx = vec![0.0; nq * n];
        for qx in 0..nq {
            for b in 0..n {
                let mut sv = 0.0;
                let mut sgx = 0.0;
                for qy in 0..nq {
                    let q = qy * nq + qx;
                    let w = self.t.value[qy][b];
                    let wd = self.t.deriv[qy][b];
                    sv += val_contrib[q] * w + grad_contrib[q][1] * wd;
                    sgx += grad_contrib[q][0] * w;
                }
                pv[qx * n + b] = sv;
                pgx[qx * n + b] = sgx;
            }
        }
        // pass 2: contract x direction
        for b in 0..n {
            for a in 0..n {
                let mut s = 0.0;
                for qx in 0..nq {
                    s += pv[qx * n + b] * self.t.value[qx][a]
                        + pgx[qx * n + b] * self.t.deriv[qx][a];
                }
                local[b * n + a] += s;
            }
        }
    }
}
