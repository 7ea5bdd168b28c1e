//! Compressed sparse row matrices assembled from triplets.

use crate::num::Real;

use super::DenseMatrix;

/// Triplet accumulator; duplicate entries are summed on conversion.
#[derive(Clone, Debug, Default)]
pub struct Triplets<T> {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> Triplets<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        if v != T::zero() {
            self.entries.push((i, j, v));
        }
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<T> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if last == Some((i, j)) {
                let n = values.len();
                values[n - 1] = values[n - 1] + v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let mut s = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s = s + self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.values[k];
            }
        }
        T::zero()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                out[(i, j)] = out[(i, j)] + v;
            }
        }
        out
    }

    /// Extract the dense submatrix with the given (sorted or unsorted) index set.
    pub fn submatrix(&self, idx: &[usize]) -> DenseMatrix<T> {
        let mut pos = std::collections::HashMap::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            pos.insert(i, k);
        }
        let mut out = DenseMatrix::zeros(idx.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            for (j, v) in self.row_entries(i) {
                if let Some(&l) = pos.get(&j) {
                    out[(k, l)] = out[(k, l)] + v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_assembles_and_multiplies() {
        let mut t = Triplets::new(3, 3);
        t.push(0, 0, 2.0f64);
        t.push(1, 1, 3.0);
        t.push(2, 2, 4.0);
        t.push(0, 0, 1.0); // duplicate, summed
        t.push(2, 0, 1.0);
        let a = t.to_csr();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 0), 3.0);
        let mut y = vec![0.0; 3];
        a.matvec(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 3.0, 5.0]);
    }

    #[test]
    fn submatrix_extraction() {
        let mut t = Triplets::new(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                t.push(i, j, (i * 3 + j) as f64);
            }
        }
        let a = t.to_csr();
        let s = a.submatrix(&[0, 2]);
        assert_eq!(s[(0, 0)], 0.0);
        assert_eq!(s[(0, 1)], 2.0);
        assert_eq!(s[(1, 0)], 6.0);
        assert_eq!(s[(1, 1)], 8.0);
    }
}
