//! LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// `P·A = L·U` with unit-diagonal `L`, both packed into one buffer.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    packed: Vec<f64>,
    /// Row `i` of `P·A` is row `perm[i]` of `A`.
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::shape("lu", a.shape(), a.shape()));
        }
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best >= PIVOT_THRESHOLD) {
                return Err(Error::Singular {
                    column: k,
                    pivot: best,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu {
            n,
            packed: lu,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.n;
        if b.rows() != n {
            return Err(Error::shape("solve", (n, n), b.shape()));
        }
        let m = b.cols();
        let mut x = b.select_rows(&self.perm);
        let xs = x.as_mut_slice();
        let lu = &self.packed;
        // L·Y = P·B
        for i in 0..n {
            for k in 0..i {
                let l = lu[i * n + k];
                if l != 0.0 {
                    for j in 0..m {
                        xs[i * m + j] -= l * xs[k * m + j];
                    }
                }
            }
        }
        // U·X = Y
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = lu[i * n + k];
                if u != 0.0 {
                    for j in 0..m {
                        xs[i * m + j] -= u * xs[k * m + j];
                    }
                }
            }
            let d = lu[i * n + i];
            for j in 0..m {
                xs[i * m + j] /= d;
            }
        }
        x.ensure_finite("solve")
    }

    /// Solves `Aᵀ·X = B` reusing the same factorization.
    pub fn solve_transpose(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.n;
        if b.rows() != n {
            return Err(Error::shape("solve_transpose", (n, n), b.shape()));
        }
        let m = b.cols();
        let mut w = b.clone();
        let ws = w.as_mut_slice();
        let lu = &self.packed;
        // Uᵀ·Z = B
        for i in 0..n {
            for k in 0..i {
                let u = lu[k * n + i];
                if u != 0.0 {
                    for j in 0..m {
                        ws[i * m + j] -= u * ws[k * m + j];
                    }
                }
            }
            let d = lu[i * n + i];
            for j in 0..m {
                ws[i * m + j] /= d;
            }
        }
        // Lᵀ·W = Z
        for i in (0..n).rev() {
            for k in i + 1..n {
                let l = lu[k * n + i];
                if l != 0.0 {
                    for j in 0..m {
                        ws[i * m + j] -= l * ws[k * m + j];
                    }
                }
            }
        }
        // X = Pᵀ·W
        let mut x = Matrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..m {
                x[(p, j)] = w[(i, j)];
            }
        }
        x.ensure_finite("solve_transpose")
    }

    /// Determinant from the pivots and the permutation parity.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut det: f64 = (0..n).map(|i| self.packed[i * n + i]).product();
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.perm[i];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

/// Solves `a·x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::shape("solve", a.shape(), b.shape()));
    }
    if a.rows() != b.rows() {
        return Err(Error::shape("solve", a.shape(), b.shape()));
    }
    Lu::factor(a)?.solve(b)
}
