//! Named trainable parameters, their gradients, and checkpoints.
//!
//! A [`ParamSet`] owns every tensor a model trains, keyed by unique names
//! (`"encoder.conv1.weight"`, ...). Tapes lease parameters by id, backward
//! passes accumulate into the per-parameter gradient buffers, and the
//! optimizer reads and clears them. Target networks are value copies kept
//! close by [`soft_update`].

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};
use crate::scalar::Real;

/// Checkpoint schema version for a serialized parameter set.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Index of a parameter inside its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Param<R> {
    name: String,
    value: Tensor<R>,
    grad: Tensor<R>,
}

/// Ordered collection of named parameters with gradient buffers.
#[derive(Debug, Clone)]
pub struct ParamSet<R> {
    params: Vec<Param<R>>,
    /// Number of backward passes since gradients were last cleared. The
    /// optimizer refuses to step while this is zero.
    backward_passes: usize,
}

impl<R: Real> Default for ParamSet<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamSet<R> {
    pub fn new() -> Self {
        Self { params: Vec::new(), backward_passes: 0 }
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name '{name}'"
        );
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Param { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    /// Uniform Glorot initialization: entries drawn from
    /// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<R> = (0..n).map(|_| R::of(rng.gen_range(-limit..limit))).collect();
        self.add(name, Tensor::new(shape, data))
    }

    /// Linear layer: `prefix.weight` of shape `(fan_in, fan_out)` with Glorot
    /// init and `prefix.bias` of zeros.
    pub fn add_linear(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> (ParamId, ParamId) {
        let w = self.add_glorot(
            format!("{prefix}.weight"),
            vec![fan_in, fan_out],
            fan_in,
            fan_out,
            rng,
        );
        let b = self.add(format!("{prefix}.bias"), Tensor::zeros(vec![fan_out]));
        (w, b)
    }

    /// Conv2d layer: `prefix.weight` of shape `(c_out, c_in, kh, kw)` with
    /// Glorot init over the receptive-field fans, `prefix.bias` of zeros.
    pub fn add_conv2d(
        &mut self,
        prefix: &str,
        c_out: usize,
        c_in: usize,
        kh: usize,
        kw: usize,
        rng: &mut impl Rng,
    ) -> (ParamId, ParamId) {
        let w = self.add_glorot(
            format!("{prefix}.weight"),
            vec![c_out, c_in, kh, kw],
            c_in * kh * kw,
            c_out * kh * kw,
            rng,
        );
        let b = self.add(format!("{prefix}.bias"), Tensor::zeros(vec![c_out]));
        (w, b)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Ids of every parameter whose name starts with one of the prefixes.
    pub fn ids_with_prefix(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| prefixes.iter().any(|pre| p.name.starts_with(pre)))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    pub fn all_ids(&self) -> Vec<ParamId> {
        (0..self.params.len()).map(ParamId).collect()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].grad
    }

    /// Adds `g` into the gradient buffer of `id`.
    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<R>) {
        let buf = &mut self.params[id.0].grad;
        debug_assert_eq!(buf.shape(), g.shape());
        for (dst, src) in buf.data_mut().iter_mut().zip(g.data()) {
            *dst += *src;
        }
    }

    pub(crate) fn note_backward(&mut self) {
        self.backward_passes += 1;
    }

    /// True once at least one backward pass has populated gradients.
    pub fn grads_populated(&self) -> bool {
        self.backward_passes > 0
    }

    /// Zeros every gradient buffer and resets the backward counter.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = R::zero();
            }
        }
        self.backward_passes = 0;
    }

    /// Serializes names, shapes, and values (widened to `f64`).
    fn to_records(&self) -> Vec<ParamRecord> {
        self.params
            .iter()
            .map(|p| ParamRecord {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().iter().map(|v| v.widen()).collect(),
            })
            .collect()
    }

    fn from_records(records: Vec<ParamRecord>) -> Result<Self, TensorError> {
        let mut set = Self::new();
        for r in records {
            let n: usize = r.shape.iter().product();
            if n != r.data.len() {
                return Err(TensorError::Checkpoint {
                    message: format!(
                        "parameter '{}' declares shape {:?} but carries {} values",
                        r.name,
                        r.shape,
                        r.data.len()
                    ),
                });
            }
            if set.params.iter().any(|p| p.name == r.name) {
                return Err(TensorError::Checkpoint {
                    message: format!("duplicate parameter '{}'", r.name),
                });
            }
            let data = r.data.into_iter().map(R::of).collect();
            set.add(r.name, Tensor::new(r.shape, data));
        }
        Ok(set)
    }

    /// Writes a single-set checkpoint file (JSON, versioned).
    pub fn save(&self, path: &Path) -> Result<(), TensorError> {
        let file = Checkpoint { version: CHECKPOINT_VERSION, params: self.to_records() };
        let bytes = serde_json::to_vec(&file).expect("checkpoint serializes");
        std::fs::write(path, bytes)
            .map_err(|source| TensorError::Io { path: path.to_path_buf(), source })
    }

    /// Reads a checkpoint written by [`Self::save`], validating the version.
    pub fn load(path: &Path) -> Result<Self, TensorError> {
        let bytes = std::fs::read(path)
            .map_err(|source| TensorError::Io { path: path.to_path_buf(), source })?;
        let file: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| {
            TensorError::Checkpoint { message: format!("not a valid checkpoint: {e}") }
        })?;
        if file.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint {
                message: format!(
                    "unsupported checkpoint version {} (expected {})",
                    file.version, CHECKPOINT_VERSION
                ),
            });
        }
        Self::from_records(file.params)
    }

    /// Schema-free view used when several sets share one checkpoint file.
    pub fn to_json_records(&self) -> serde_json::Value {
        serde_json::to_value(self.to_records()).expect("records serialize")
    }

    pub fn from_json_records(value: serde_json::Value) -> Result<Self, TensorError> {
        let records: Vec<ParamRecord> = serde_json::from_value(value).map_err(|e| {
            TensorError::Checkpoint { message: format!("bad parameter records: {e}") }
        })?;
        Self::from_records(records)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    params: Vec<ParamRecord>,
}

/// Moves `target` toward `online`: `t <- tau * o + (1 - tau) * t` for every
/// parameter. The two sets must have identical names and shapes.
pub fn soft_update<R: Real>(
    target: &mut ParamSet<R>,
    online: &ParamSet<R>,
    tau: R,
) -> Result<(), TensorError> {
    if target.len() != online.len() {
        return Err(TensorError::ParamMismatch {
            message: format!("target has {} params, online {}", target.len(), online.len()),
        });
    }
    for i in 0..target.params.len() {
        let (t, o) = (&mut target.params[i], &online.params[i]);
        if t.name != o.name || t.value.shape() != o.value.shape() {
            return Err(TensorError::ParamMismatch {
                message: format!("parameter {} ('{}' vs '{}') differs", i, t.name, o.name),
            });
        }
        for (tv, ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            *tv = tau * *ov + (R::one() - tau) * *tv;
        }
    }
    Ok(())
}
