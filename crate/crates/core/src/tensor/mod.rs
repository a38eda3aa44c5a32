//! Minimal reverse-mode automatic differentiation.
//!
//! Exactly the operator set the agents need, nothing more: dense matmul,
//! valid-mode stride-1 conv2d, a GRU cell (built from primitives), relu,
//! sigmoid, tanh, softmax, ln, reductions, and elementwise arithmetic.
//! Computations are recorded on a [`graph::Tape`]; a single backward pass
//! per tape accumulates gradients into a [`params::ParamSet`], which the
//! [`adam::Adam`] optimizer consumes.
//!
//! Everything is generic over [`crate::scalar::Real`] and deterministic:
//! parameter initialization draws from a caller-seeded generator, and
//! checkpoints round-trip losslessly through JSON.

pub mod adam;
pub mod graph;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{gru_cell, GruCellVars, Tape, Var};
pub use params::{ParamId, ParamSet};

use thiserror::Error;

use crate::scalar::Real;

/// Errors from tensor construction, tape operations, and checkpoints.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: expects {expect}, got shape {got:?}")]
    BadShape { op: &'static str, expect: &'static str, got: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotAScalar { shape: Vec<usize> },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("optimizer step without populated gradients (no backward pass since last clear)")]
    GradientsMissing,
    #[error("parameter set mismatch: {message}")]
    ParamMismatch { message: String },
    #[error("checkpoint error: {message}")]
    Checkpoint { message: String },
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dense n-dimensional value: a shape and a row-major buffer.
///
/// A scalar is represented by the empty shape `[]` with one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor buffer does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![R::zero(); n] }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![R::one(); n] }
    }

    pub fn scalar(x: R) -> Self {
        Self { shape: Vec::new(), data: vec![x] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    /// The single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> R {
        assert_eq!(self.numel(), 1, "item() on non-scalar shape {:?}", self.shape);
        self.data[0]
    }

    /// Converts a `rows x cols` matrix into a tensor of the same layout.
    pub fn from_matrix(m: &crate::linalg::Matrix<R>) -> Self {
        Self::new(vec![m.rows(), m.cols()], m.data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_tensors_use_empty_shape() {
        let t = Tensor::scalar(2.5f64);
        assert_eq!(t.shape(), &[] as &[usize]);
        assert_eq!(t.numel(), 1);
        assert_eq!(t.item(), 2.5);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn mismatched_buffer_panics() {
        let _ = Tensor::new(vec![2, 3], vec![0.0f64; 5]);
    }
}
