//! Minimal dense linear algebra: row-major matrices, the handful of products
//! the MLP and metrics need, and a cyclic Jacobi eigensolver for symmetric
//! matrices (used by the Frechet distance).

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![T::zero(); self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = T::zero();
            for (w, xv) in row.iter().zip(x) {
                acc += *w * *xv;
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn tvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            let row = self.row(r);
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += *w * xr;
            }
        }
        y
    }

    /// self += scale * u v^T
    pub fn add_outer(&mut self, scale: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            let s = scale * u[r];
            let row = self.row_mut(r);
            for (w, vc) in row.iter_mut().zip(v) {
                *w += s * *vc;
            }
        }
    }

    /// self += scale * other (same shape).
    pub fn add_scaled(&mut self, scale: T, other: &Matrix<T>) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * *b;
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (eigenvalues, eigenvectors-as-columns). Good to near machine
/// precision for the moderate dimensions the metrics use.
pub fn sym_eigen<T: Scalar>(a: &Matrix<T>, max_sweeps: usize) -> (Vec<T>, Matrix<T>) {
    assert_eq!(a.rows, a.cols, "sym_eigen needs a square matrix");
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Matrix::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() });
    let tol = T::of(1e-14);

    for _ in 0..max_sweeps {
        let mut off_sq = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off_sq += m.get(p, q) * m.get(p, q);
            }
        }
        if off_sq.sqrt() <= tol * m.frobenius_norm().max(T::one()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (T::of(2.0) * apq);
                // stable tangent of the rotation angle
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let eig = (0..n).map(|i| m.get(i, i)).collect();
    (eig, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_tvec_agree_with_hand_values() {
        let m = Matrix { rows: 2, cols: 3, data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.tvec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // symmetric 3x3 with known eigenvalues {1, 2, 4}
        // built as Q diag(1,2,4) Q^T for a rotation Q
        let q = {
            let th: f64 = 0.3;
            Matrix {
                rows: 3,
                cols: 3,
                data: vec![th.cos(), -th.sin(), 0.0, th.sin(), th.cos(), 0.0, 0.0, 0.0, 1.0],
            }
        };
        let d = [1.0, 2.0, 4.0];
        let mut a = Matrix::zeros(3, 3);
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += q.get(r, k) * d[k] * q.get(c, k);
                }
                a.set(r, c, acc);
            }
        }
        let (mut eig, _) = sym_eigen(&a, 30);
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (got, want) in eig.iter().zip(&d) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn jacobi_eigenvectors_reconstruct_matrix() {
        let a: Matrix<f64> = Matrix { rows: 2, cols: 2, data: vec![2.0, 0.5, 0.5, 1.0] };
        let (eig, v) = sym_eigen(&a, 30);
        for r in 0..2 {
            for c in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += v.get(r, k) * eig[k] * v.get(c, k);
                }
                assert!((acc - a.get(r, c)).abs() < 1e-12);
            }
        }
    }
}
