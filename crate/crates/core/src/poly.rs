//! 1D Lagrange bases on arbitrary node sets, with derivative evaluation.

use crate::la::DenseMatrix;
use crate::num::Real;

/// Lagrange basis through a fixed set of distinct nodes on [0, 1].
#[derive(Clone, Debug)]
pub struct LagrangeBasis<T> {
    nodes: Vec<T>,
    /// Barycentric weights.
    bary: Vec<T>,
}

impl<T: Real> LagrangeBasis<T> {
    pub fn new(nodes: Vec<T>) -> Self {
        let n = nodes.len();
        let mut bary = vec![T::one(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    bary[i] = bary[i] * (nodes[i] - nodes[j]);
                }
            }
            bary[i] = T::one() / bary[i];
        }
        Self { nodes, bary }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Value of basis function `i` at `x`.
    pub fn value(&self, i: usize, x: T) -> T {
        // direct product form; robust at and away from the nodes
        let mut v = T::one();
        for j in 0..self.nodes.len() {
            if j != i {
                v = v * (x - self.nodes[j]);
            }
        }
        v * self.bary[i]
    }

    /// First derivative of basis function `i` at `x`.
    pub fn derivative(&self, i: usize, x: T) -> T {
        let n = self.nodes.len();
        let mut sum = T::zero();
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut prod = T::one();
            for j in 0..n {
                if j != i && j != k {
                    prod = prod * (x - self.nodes[j]);
                }
            }
            sum = sum + prod;
        }
        sum * self.bary[i]
    }

    /// Second derivative of basis function `i` at `x`.
    pub fn second_derivative(&self, i: usize, x: T) -> T {
        let n = self.nodes.len();
        let mut sum = T::zero();
        for k in 0..n {
            if k == i {
                continue;
            }
            for l in 0..n {
                if l == i || l == k {
                    continue;
                }
                let mut prod = T::one();
                for j in 0..n {
                    if j != i && j != k && j != l {
                        prod = prod * (x - self.nodes[j]);
                    }
                }
                sum = sum + prod;
            }
        }
        sum * self.bary[i]
    }

    /// Matrix E with E[q][i] = phi_i(points[q]).
    pub fn eval_matrix(&self, points: &[T]) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(points.len(), self.len());
        for (q, &x) in points.iter().enumerate() {
            for i in 0..self.len() {
                m[(q, i)] = self.value(i, x);
            }
        }
        m
    }
}
