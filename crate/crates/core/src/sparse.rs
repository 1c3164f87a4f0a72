//! Compressed sparse row storage for complex operators.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    /// Assembles a square matrix from `(row, col, value)` triplets, summing
    /// duplicates and dropping exact zeros.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<C64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Csr { dim, row_ptr, cols, vals };
        m.prune();
        m
    }

    pub fn from_dense(a: &DMatrix<C64>) -> Self {
        let mut t = Vec::new();
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                let v = a[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    t.push((r, c, v));
                }
            }
        }
        Csr::from_triplets(a.nrows(), &t)
    }

    fn prune(&mut self) {
        let zero = C64::new(0.0, 0.0);
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != zero {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        (0..self.dim).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            a[(r, c)] += v;
        }
        a
    }

    pub fn adjoint(&self) -> Csr {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Csr::from_triplets(self.dim, &t)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// `Y = A X` for row-major square `X`, `Y` of this dimension.
    pub fn mul_square(&self, x: &[C64], y: &mut [C64]) {
        let d = self.dim;
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for r in 0..d {
            let yr = &mut y[r * d..(r + 1) * d];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[k];
                let xr = &x[self.cols[k] * d..(self.cols[k] + 1) * d];
                for (yv, xv) in yr.iter_mut().zip(xr) {
                    *yv += a * xv;
                }
            }
        }
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.dim];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            col[*c] += v.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Induced infinity-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}
