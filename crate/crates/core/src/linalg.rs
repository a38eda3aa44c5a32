//! Small dense linear-algebra helpers shared by the numeric modules.
//!
//! Nothing here aspires to be a linear-algebra library: the engine only ever
//! needs a row-major matrix container (return matrices, agent states) and a
//! pivoted Gaussian solve for tiny systems (quartic-potential fits, online
//! Newton steps, active-set subproblems). Problem sizes are single digits to
//! a few thousand entries, so clarity beats blocking and SIMD.

use thiserror::Error;

use crate::scalar::Real;

/// Errors from the dense helpers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// Coefficient matrix is singular (or numerically so) at the given pivot.
    #[error("singular system: no usable pivot at column {column}")]
    Singular { column: usize },
    /// Caller passed inconsistent dimensions.
    #[error("dimension mismatch: {context}")]
    Dimension { context: String },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> Matrix<R> {
    /// Creates a `rows x cols` matrix filled with zeros.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![R::zero(); rows * cols] }
    }

    /// Wraps an existing row-major buffer. Panics if the length disagrees.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<R>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> R {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: R) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[R] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column `c` collected into a vector.
    pub fn col(&self, c: usize) -> Vec<R> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Underlying row-major buffer.
    pub fn data(&self) -> &[R] {
        &self.data
    }

    /// Copies a contiguous block of columns `[from, to)` into a new matrix.
    pub fn col_block(&self, from: usize, to: usize) -> Matrix<R> {
        assert!(from <= to && to <= self.cols, "column block out of range");
        let mut out = Matrix::zeros(self.rows, to - from);
        for r in 0..self.rows {
            for (k, c) in (from..to).enumerate() {
                out.set(r, k, self.get(r, c));
            }
        }
        out
    }
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n`; both inputs are consumed.
///
/// Near-zero pivots (relative to the largest entry of the matrix) are
/// reported as [`LinalgError::Singular`] rather than silently amplified.
pub fn solve<R: Real>(mut a: Matrix<R>, mut b: Vec<R>) -> Result<Vec<R>, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::Dimension {
            context: format!("solve: a is {}x{}, b has {}", a.rows(), a.cols(), b.len()),
        });
    }
    let scale = a.data().iter().fold(R::zero(), |m, &v| m.max(v.abs())).max(R::one());
    let tiny = scale * R::of(1e-13) * R::of_usize(n.max(1));

    for k in 0..n {
        // Partial pivot: largest magnitude in column k at or below the diagonal.
        let mut p = k;
        for r in (k + 1)..n {
            if a.get(r, k).abs() > a.get(p, k).abs() {
                p = r;
            }
        }
        if a.get(p, k).abs() <= tiny {
            return Err(LinalgError::Singular { column: k });
        }
        if p != k {
            for c in 0..n {
                let (x, y) = (a.get(k, c), a.get(p, c));
                a.set(k, c, y);
                a.set(p, c, x);
            }
            b.swap(k, p);
        }
        let pivot = a.get(k, k);
        for r in (k + 1)..n {
            let f = a.get(r, k) / pivot;
            if f == R::zero() {
                continue;
            }
            for c in k..n {
                let v = a.get(r, c) - f * a.get(k, c);
                a.set(r, c, v);
            }
            b[r] = b[r] - f * b[k];
        }
    }

    // Back substitution.
    let mut x = vec![R::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in (k + 1)..n {
            s = s - a.get(k, c) * x[c];
        }
        x[k] = s / a.get(k, k);
    }
    Ok(x)
}

/// Dot product of two equal-length slices.
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(R::zero(), |acc, (&x, &y)| acc + x * y)
}
