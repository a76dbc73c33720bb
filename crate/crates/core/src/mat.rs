//! Small dense matrices, sized for the problems in this crate.
//!
//! Row-major storage throughout. `CMat` holds complex entries and backs the
//! 2D modulator, planar array responses and the zero-forcing precoder;
//! `RMat` holds real entries and backs the cone solver.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex<T>,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { rows, cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A v` for a column vector `v` of length `cols`.
    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (a, x)| {
                        acc + a * x
                    })
            })
            .collect()
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> CMat<T> {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Sum of `|Re| + |Im|` over all entries.
    pub fn iq_norm1(&self) -> T {
        self.data
            .iter()
            .map(|z| z.re.abs() + z.im.abs())
            .fold(T::zero(), |a, b| a + b)
    }

    /// Right pseudo-inverse `A^H (A A^H)^{-1}` of a full-row-rank wide matrix.
    pub fn right_pinv(&self) -> Result<CMat<T>> {
        let k = self.rows;
        let ah = self.hermitian();
        // Gram matrix A A^H (k x k).
        let mut gram = CMat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let mut acc = Complex::new(T::zero(), T::zero());
                for c in 0..self.cols {
                    acc += self[(i, c)] * self[(j, c)].conj();
                }
                gram[(i, j)] = acc;
            }
        }
        let inv = gram.lu_inverse()?;
        // A^H * gram^{-1}  (n x k).
        let mut out = CMat::zeros(self.cols, k);
        for r in 0..self.cols {
            for c in 0..k {
                let mut acc = Complex::new(T::zero(), T::zero());
                for j in 0..k {
                    acc += ah[(r, j)] * inv[(j, c)];
                }
                out[(r, c)] = acc;
            }
        }
        Ok(out)
    }

    /// Inverse of a small square matrix by LU with partial pivoting.
    fn lu_inverse(&self) -> Result<CMat<T>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = CMat::from_fn(n, n, |r, c| {
            if r == c {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        });
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .norm_sqr()
                        .partial_cmp(&a[(j, col)].norm_sqr())
                        .expect("finite pivots")
                })
                .expect("nonempty column");
            if a[(pivot, col)].norm_sqr() == T::zero() {
                return Err(Error::SolverStalled {
                    iterations: 0,
                    primal: f64::INFINITY,
                    dual: f64::INFINITY,
                    gap: f64::INFINITY,
                });
            }
            if pivot != col {
                for c in 0..n {
                    let (x, y) = (a[(col, c)], a[(pivot, c)]);
                    a[(col, c)] = y;
                    a[(pivot, c)] = x;
                    let (x, y) = (inv[(col, c)], inv[(pivot, c)]);
                    inv[(col, c)] = y;
                    inv[(pivot, c)] = x;
                }
            }
            let d = a[(col, col)];
            for c in 0..n {
                a[(col, c)] /= d;
                inv[(col, c)] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f.norm_sqr() == T::zero() {
                    continue;
                }
                for c in 0..n {
                    let ac = a[(col, c)];
                    let ic = inv[(col, c)];
                    a[(r, c)] -= f * ac;
                    inv[(r, c)] -= f * ic;
                }
            }
        }
        Ok(inv)
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> RMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(&a, &x)| a * x).sum())
            .collect()
    }

    /// `A^T v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (r, &w) in v.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * w;
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for RMat<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for RMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}
