//! 1D quadrature rules on the reference interval [0, 1].

use crate::num::Real;

/// Nodes and weights of a quadrature rule on [0, 1].
#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial P_n and its derivative at x in [-1, 1].
fn legendre_pair<T: Real>(n: usize, x: T) -> (T, T) {
    if n == 0 {
        return (T::one(), T::zero());
    }
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 1..n {
        let kf = T::usize(k);
        let p2 = ((T::of(2.0) * kf + T::one()) * x * p1 - kf * p0) / (kf + T::one());
        p0 = p1;
        p1 = p2;
    }
    // derivative from the standard identity (valid for |x| != 1)
    let denom = x * x - T::one();
    let dp = if denom.abs() < T::of(1e-30) {
        // at the endpoints: P_n'(±1) = ±^[n+1] n(n+1)/2
        let nf = T::usize(n);
        let v = nf * (nf + T::one()) / T::of(2.0);
        if x > T::zero() {
            v
        } else if n % 2 == 0 {
            -v
        } else {
            v
        }
    } else {
        T::usize(n) * (x * p1 - p0) / denom
    };
    (p1, dp)
}

/// Shifted Legendre polynomial value on [0, 1] (orthogonal, not normalized).
pub fn legendre_shifted<T: Real>(n: usize, t: T) -> T {
    legendre_pair(n, T::of(2.0) * t - T::one()).0
}

/// Gauss-Legendre rule with `n` points, exact to degree 2n-1.
pub fn gauss_legendre<T: Real>(n: usize) -> QuadratureRule<T> {
    assert!(n >= 1);
    let mut points = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    for i in 0..n {
        // Chebyshev initial guess, Newton refinement on [-1, 1]
        let theta = std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5);
        let mut x = T::of(-theta.cos());
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x = x - dx;
            if dx.abs() < T::epsilon() * T::of(4.0) {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = T::of(2.0) / ((T::one() - x * x) * dp * dp);
        points[i] = (x + T::one()) / T::of(2.0);
        weights[i] = w / T::of(2.0);
    }
    QuadratureRule { points, weights }
}

/// Gauss-Lobatto points with `n >= 2` points on [0, 1] (includes endpoints).
///
/// These are the element node locations; no weights are needed for that.
pub fn gauss_lobatto_points<T: Real>(n: usize) -> Vec<T> {
    assert!(n >= 2);
    let mut pts = vec![T::zero(); n];
    pts[0] = T::zero();
    pts[n - 1] = T::one();
    // interior points are the roots of P'_{n-1}
    let m = n - 1;
    for i in 1..m {
        let theta = std::f64::consts::PI * (1.0 - i as f64 / m as f64);
        let mut x = T::of(theta.cos());
        for _ in 0..100 {
            // Newton on P'_m using P''_m from the Legendre ODE:
            // (1-x^2) P''  = 2x P' - m(m+1) P
            let (p, dp) = legendre_pair(m, x);
            let mf = T::usize(m);
            let ddp = (T::of(2.0) * x * dp - mf * (mf + T::one()) * p) / (T::one() - x * x);
            let dx = dp / ddp;
            x = x - dx;
            if dx.abs() < T::epsilon() * T::of(4.0) {
                break;
            }
        }
        pts[i] = (x + T::one()) / T::of(2.0);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}

/// Right Gauss-Radau points with `n` points on (0, 1] (includes t = 1).
///
/// Roots of P_n(2t-1) - P_{n-1}(2t-1); the abscissae of the Radau IIA family.
pub fn gauss_radau_right_points<T: Real>(n: usize) -> Vec<T> {
    assert!(n >= 1);
    if n == 1 {
        return vec![T::one()];
    }
    let f = |x: T| {
        let (pn, _) = legendre_pair(n, x);
        let (pm, _) = legendre_pair(n - 1, x);
        pn - pm
    };
    // bisection on sign changes of the scan, then Newton-free refinement
    let mut roots = Vec::with_capacity(n);
    let samples = 200 * n;
    let mut prev_x = T::of(-1.0);
    let mut prev_f = f(prev_x);
    for s in 1..=samples {
        let x = T::of(-1.0 + 2.0 * s as f64 / samples as f64);
        let fx = f(x);
        if prev_f == T::zero() {
            roots.push(prev_x);
        } else if (prev_f < T::zero()) != (fx < T::zero()) {
            let mut a = prev_x;
            let mut b = x;
            let mut fa = prev_f;
            for _ in 0..200 {
                let mid = (a + b) / T::of(2.0);
                let fm = f(mid);
                if fm == T::zero() || (b - a).abs() < T::epsilon() * T::of(2.0) {
                    a = mid;
                    break;
                }
                if (fa < T::zero()) != (fm < T::zero()) {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push((a + b) / T::of(2.0));
        }
        prev_x = x;
        prev_f = fx;
    }
    // x = 1 is always a root (P_n(1) = P_{n-1}(1) = 1) that the scan may miss
    if roots
        .last()
        .map(|&r| (r - T::one()).abs() > T::of(1e-8))
        .unwrap_or(true)
    {
        roots.push(T::one());
    }
    assert_eq!(roots.len(), n, "Radau root scan miscounted");
    roots.iter().map(|&x| (x + T::one()) / T::of(2.0)).collect()
}
