//! Small dense/sparse linear algebra used throughout the solvers.

mod csr;
mod dense;

pub use csr::{CsrMatrix, Triplets};
pub use dense::{DenseMatrix, LuFactor};

use crate::num::Real;

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn scale<T: Real>(alpha: T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi = *xi * alpha;
    }
}

/// Deterministic xorshift generator for seed vectors and randomized checks.
///
/// Kept dependency-free so library code (power iteration) and tests draw from
/// the same reproducible stream.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform sample in (-1, 1).
    pub fn next_real<T: Real>(&mut self) -> T {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        T::of(2.0 * u - 1.0)
    }

    pub fn vector<T: Real>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.next_real()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_norm() {
        let a = vec![1.0f64, 2.0, 2.0];
        assert_eq!(dot(&a, &a), 9.0);
        assert_eq!(norm2(&a), 3.0);
        let b = vec![1.0f32, 2.0, 2.0];
        assert_eq!(norm2(&b), 3.0f32);
    }

    #[test]
    fn splitmix_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        let va: Vec<f64> = a.vector(8);
        let vb: Vec<f64> = b.vector(8);
        assert_eq!(va, vb);
        assert!(va.iter().all(|x| x.abs() < 1.0));
    }
}
