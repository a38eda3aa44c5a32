//! The tape: recorded forward operations and one backward pass.
//!
//! A [`Tape`] is a shared append-only list of nodes; a [`Var`] is an index
//! into it. Every operator validates shapes eagerly (naming itself in the
//! error), computes its value immediately, and records what it needs for the
//! pullback. [`backward`] walks the nodes once in reverse, pushes gradients
//! to leased parameters, and consumes the tape — a second backward on the
//! same tape is an error, as is one on a non-scalar loss.

use std::cell::RefCell;
use std::rc::Rc;

use super::params::{ParamId, ParamSet};
use super::{Tensor, TensorError};
use crate::scalar::Real;

/// One recorded operation. Fields are input node indices.
#[derive(Debug, Clone)]
enum Payload<R> {
    Leaf { trainable: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, R),
    /// `(N, F) + (F)` broadcast over rows.
    AddRowBias(usize, usize),
    /// `(N, C, H, W) + (C)` broadcast over everything but channels.
    AddChannelBias(usize, usize),
    MatMul(usize, usize),
    /// Valid-mode stride-1 convolution, input `(N, Ci, H, W)`, kernel
    /// `(Co, Ci, kh, kw)`.
    Conv2d(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Ln(usize),
    /// Softmax along the last axis.
    Softmax(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node<R> {
    payload: Payload<R>,
    value: Tensor<R>,
}

#[derive(Debug)]
struct TapeInner<R> {
    nodes: Vec<Node<R>>,
    /// Parameter leases: `(param, leaf node)` pairs, at most one per param.
    leases: Vec<(ParamId, usize)>,
    consumed: bool,
}

/// Recording tape. Cheap to clone (shared).
#[derive(Debug, Clone)]
pub struct Tape<R> {
    inner: Rc<RefCell<TapeInner<R>>>,
}

/// Handle to one tape node.
#[derive(Debug, Clone)]
pub struct Var<R> {
    tape: Tape<R>,
    idx: usize,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                leases: Vec::new(),
                consumed: false,
            })),
        }
    }

    fn push(&self, payload: Payload<R>, value: Tensor<R>) -> Var<R> {
        let mut inner = self.inner.borrow_mut();
        assert!(!inner.consumed, "recording on a consumed tape");
        inner.nodes.push(Node { payload, value });
        Var { tape: self.clone(), idx: inner.nodes.len() - 1 }
    }

    /// Records a non-trainable value.
    pub fn constant(&self, value: Tensor<R>) -> Var<R> {
        self.push(Payload::Leaf { trainable: false }, value)
    }

    /// Leases a parameter onto the tape. Leasing the same parameter twice
    /// returns the same node, so its gradient accumulates across all uses.
    pub fn param(&self, set: &ParamSet<R>, id: ParamId) -> Var<R> {
        if let Some(&(_, idx)) =
            self.inner.borrow().leases.iter().find(|(pid, _)| *pid == id)
        {
            return Var { tape: self.clone(), idx };
        }
        let v = self.push(Payload::Leaf { trainable: true }, set.value(id).clone());
        self.inner.borrow_mut().leases.push((id, v.idx));
        v
    }

    fn ensure_live(&self) -> Result<(), TensorError> {
        if self.inner.borrow().consumed {
            return Err(TensorError::TapeConsumed);
        }
        Ok(())
    }

    fn value_of(&self, idx: usize) -> Tensor<R> {
        self.inner.borrow().nodes[idx].value.clone()
    }

    fn shape_of(&self, idx: usize) -> Vec<usize> {
        self.inner.borrow().nodes[idx].value.shape().to_vec()
    }
}

impl<R: Real> Var<R> {
    pub fn value(&self) -> Tensor<R> {
        self.tape.value_of(self.idx)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.idx)
    }

    pub fn tape(&self) -> &Tape<R> {
        &self.tape
    }

    fn same_tape(&self, other: &Var<R>) {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &other.tape.inner),
            "variables come from different tapes"
        );
    }

    /// Constant of ones with this variable's shape.
    pub fn ones_like(&self) -> Var<R> {
        self.tape.constant(Tensor::ones(self.shape()))
    }

    fn binary_same_shape(
        &self,
        other: &Var<R>,
        op: &'static str,
        make: fn(usize, usize) -> Payload<R>,
        f: fn(R, R) -> R,
    ) -> Result<Var<R>, TensorError> {
        self.same_tape(other);
        self.tape.ensure_live()?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(a.shape().to_vec(), data);
        Ok(self.tape.push(make(self.idx, other.idx), value))
    }

    pub fn add(&self, other: &Var<R>) -> Result<Var<R>, TensorError> {
        self.binary_same_shape(other, "add", Payload::Add, |x, y| x + y)
    }

    pub fn sub(&self, other: &Var<R>) -> Result<Var<R>, TensorError> {
        self.binary_same_shape(other, "sub", Payload::Sub, |x, y| x - y)
    }

    pub fn mul(&self, other: &Var<R>) -> Result<Var<R>, TensorError> {
        self.binary_same_shape(other, "mul", Payload::Mul, |x, y| x * y)
    }

    /// Multiplication by a compile-time-known constant.
    pub fn scale(&self, c: R) -> Result<Var<R>, TensorError> {
        self.tape.ensure_live()?;
        let a = self.value();
        let data = a.data().iter().map(|&x| c * x).collect();
        let value = Tensor::new(a.shape().to_vec(), data);
        Ok(self.tape.push(Payload::Scale(self.idx, c), value))
    }

    /// Adds a bias vector to every row: `(N, F) + (F)`.
    pub fn add_row_bias(&self, bias: &Var<R>) -> Result<Var<R>, TensorError> {
        self.same_tape(bias);
        self.tape.ensure_live()?;
        let (x, b) = (self.value(), bias.value());
        let ok = x.shape().len() == 2 && b.shape().len() == 1 && x.shape()[1] == b.shape()[0];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (n, f) = (x.shape()[0], x.shape()[1]);
        let mut data = x.data().to_vec();
        for r in 0..n {
            for c in 0..f {
                data[r * f + c] += b.data()[c];
            }
        }
        let value = Tensor::new(vec![n, f], data);
        Ok(self.tape.push(Payload::AddRowBias(self.idx, bias.idx), value))
    }

    /// Adds a per-channel bias: `(N, C, H, W) + (C)`.
    pub fn add_channel_bias(&self, bias: &Var<R>) -> Result<Var<R>, TensorError> {
        self.same_tape(bias);
        self.tape.ensure_live()?;
        let (x, b) = (self.value(), bias.value());
        let ok = x.shape().len() == 4 && b.shape().len() == 1 && x.shape()[1] == b.shape()[0];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "add_channel_bias",
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let mut data = x.data().to_vec();
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * h * w;
                for k in 0..h * w {
                    data[base + k] += b.data()[ch];
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], data);
        Ok(self.tape.push(Payload::AddChannelBias(self.idx, bias.idx), value))
    }

    /// Dense 2-D product: `(p, q) x (q, r) -> (p, r)`.
    pub fn matmul(&self, other: &Var<R>) -> Result<Var<R>, TensorError> {
        self.same_tape(other);
        self.tape.ensure_live()?;
        let (a, b) = (self.value(), other.value());
        let ok = a.shape().len() == 2 && b.shape().len() == 2 && a.shape()[1] == b.shape()[0];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let value = matmul_fw(&a, &b);
        Ok(self.tape.push(Payload::MatMul(self.idx, other.idx), value))
    }

    /// Valid-mode stride-1 batched convolution.
    pub fn conv2d(&self, kernel: &Var<R>) -> Result<Var<R>, TensorError> {
        self.same_tape(kernel);
        self.tape.ensure_live()?;
        let (x, k) = (self.value(), kernel.value());
        let ok = x.shape().len() == 4
            && k.shape().len() == 4
            && x.shape()[1] == k.shape()[1]
            && k.shape()[2] <= x.shape()[2]
            && k.shape()[3] <= x.shape()[3];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: x.shape().to_vec(),
                rhs: k.shape().to_vec(),
            });
        }
        let value = conv2d_fw(&x, &k);
        Ok(self.tape.push(Payload::Conv2d(self.idx, kernel.idx), value))
    }

    fn unary(
        &self,
        op: &'static str,
        make: fn(usize) -> Payload<R>,
        f: impl Fn(R) -> R,
    ) -> Result<Var<R>, TensorError> {
        let _ = op;
        self.tape.ensure_live()?;
        let a = self.value();
        let data = a.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(a.shape().to_vec(), data);
        Ok(self.tape.push(make(self.idx), value))
    }

    pub fn relu(&self) -> Result<Var<R>, TensorError> {
        self.unary("relu", Payload::Relu, |x| x.max(R::zero()))
    }

    pub fn sigmoid(&self) -> Result<Var<R>, TensorError> {
        self.unary("sigmoid", Payload::Sigmoid, |x| R::one() / (R::one() + (-x).exp()))
    }

    pub fn tanh(&self) -> Result<Var<R>, TensorError> {
        self.unary("tanh", Payload::Tanh, |x| x.tanh())
    }

    /// Natural log. The caller must keep inputs positive (softmax outputs,
    /// growth factors); non-positive entries propagate as non-finite values.
    pub fn ln(&self) -> Result<Var<R>, TensorError> {
        self.unary("ln", Payload::Ln, |x| x.ln())
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax(&self) -> Result<Var<R>, TensorError> {
        self.tape.ensure_live()?;
        let a = self.value();
        if a.shape().is_empty() {
            return Err(TensorError::BadShape {
                op: "softmax",
                expect: "at least one axis",
                got: a.shape().to_vec(),
            });
        }
        let last = *a.shape().last().unwrap();
        let rows = a.numel() / last;
        let mut data = a.data().to_vec();
        for r in 0..rows {
            let row = &mut data[r * last..(r + 1) * last];
            let max = row.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
            let mut total = R::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(a.shape().to_vec(), data);
        Ok(self.tape.push(Payload::Softmax(self.idx), value))
    }

    /// Sum of all entries, producing a scalar.
    pub fn sum(&self) -> Result<Var<R>, TensorError> {
        self.tape.ensure_live()?;
        let total = self.value().data().iter().fold(R::zero(), |acc, &v| acc + v);
        Ok(self.tape.push(Payload::Sum(self.idx), Tensor::scalar(total)))
    }

    /// Mean of all entries, producing a scalar.
    pub fn mean(&self) -> Result<Var<R>, TensorError> {
        self.tape.ensure_live()?;
        let a = self.value();
        let total = a.data().iter().fold(R::zero(), |acc, &v| acc + v);
        let value = Tensor::scalar(total / R::of_usize(a.numel()));
        Ok(self.tape.push(Payload::Mean(self.idx), value))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<R>, TensorError> {
        self.tape.ensure_live()?;
        let a = self.value();
        if shape.iter().product::<usize>() != a.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: a.shape().to_vec(),
                rhs: shape,
            });
        }
        let value = Tensor::new(shape, a.data().to_vec());
        Ok(self.tape.push(Payload::Reshape(self.idx), value))
    }
}

/// `x w + b` — the standard dense layer.
pub fn affine<R: Real>(x: &Var<R>, w: &Var<R>, b: &Var<R>) -> Result<Var<R>, TensorError> {
    x.matmul(w)?.add_row_bias(b)
}

/// Parameters of one GRU cell, already leased onto a tape.
///
/// Shapes for input width `d` and hidden width `k`: the `w_*` are `(d, k)`,
/// the `u_*` are `(k, k)`, the `b_*` are `(k)`.
pub struct GruCellVars<R> {
    pub w_z: Var<R>,
    pub u_z: Var<R>,
    pub b_z: Var<R>,
    pub w_r: Var<R>,
    pub u_r: Var<R>,
    pub b_r: Var<R>,
    pub w_n: Var<R>,
    pub u_n: Var<R>,
    pub b_n: Var<R>,
}

/// One GRU step: update gate `z`, reset gate `r` (both sigmoid), tanh
/// candidate, convex blend. With `h` in `(-1, 1)` the new state stays in
/// `(-1, 1)`.
///
/// ```text
/// z  = sigmoid(x W_z + h U_z + b_z)
/// r  = sigmoid(x W_r + h U_r + b_r)
/// n  = tanh(x W_n + (r . h) U_n + b_n)
/// h' = (1 - z) . n + z . h
/// ```
pub fn gru_cell<R: Real>(
    x: &Var<R>,
    h: &Var<R>,
    p: &GruCellVars<R>,
) -> Result<Var<R>, TensorError> {
    let z = x.matmul(&p.w_z)?.add(&h.matmul(&p.u_z)?)?.add_row_bias(&p.b_z)?.sigmoid()?;
    let r = x.matmul(&p.w_r)?.add(&h.matmul(&p.u_r)?)?.add_row_bias(&p.b_r)?.sigmoid()?;
    let rh = r.mul(h)?;
    let n = x.matmul(&p.w_n)?.add(&rh.matmul(&p.u_n)?)?.add_row_bias(&p.b_n)?.tanh()?;
    let one_minus_z = z.ones_like().sub(&z)?;
    one_minus_z.mul(&n)?.add(&z.mul(h)?)
}

/// Runs the backward pass from a scalar loss, accumulating gradients of all
/// leased parameters into `set`, then consumes the tape.
pub fn backward<R: Real>(loss: &Var<R>, set: &mut ParamSet<R>) -> Result<(), TensorError> {
    let mut inner = loss.tape.inner.borrow_mut();
    if inner.consumed {
        return Err(TensorError::TapeConsumed);
    }
    let l_idx = loss.idx;
    if inner.nodes[l_idx].value.numel() != 1 {
        return Err(TensorError::NotAScalar { shape: inner.nodes[l_idx].value.shape().to_vec() });
    }
    inner.consumed = true;

    let mut grads: Vec<Option<Tensor<R>>> = (0..inner.nodes.len()).map(|_| None).collect();
    grads[l_idx] = Some(Tensor::ones(inner.nodes[l_idx].value.shape().to_vec()));

    // Reverse topological order is reverse construction order.
    for i in (0..=l_idx).rev() {
        let Some(g) = grads[i].take() else { continue };
        let payload = inner.nodes[i].payload.clone();
        match payload {
            Payload::Leaf { trainable } => {
                if trainable {
                    if let Some(&(pid, _)) =
                        inner.leases.iter().find(|(_, idx)| *idx == i)
                    {
                        set.accumulate_grad(pid, &g);
                    }
                }
            }
            Payload::Add(a, b) => {
                accumulate(&mut grads[a], g.clone());
                accumulate(&mut grads[b], g);
            }
            Payload::Sub(a, b) => {
                accumulate(&mut grads[a], g.clone());
                accumulate(&mut grads[b], negate(&g));
            }
            Payload::Mul(a, b) => {
                let ga = hadamard(&g, &inner.nodes[b].value);
                let gb = hadamard(&g, &inner.nodes[a].value);
                accumulate(&mut grads[a], ga);
                accumulate(&mut grads[b], gb);
            }
            Payload::Scale(a, c) => {
                let ga = Tensor::new(g.shape().to_vec(), g.data().iter().map(|&v| c * v).collect());
                accumulate(&mut grads[a], ga);
            }
            Payload::AddRowBias(x, b) => {
                let f = g.shape()[1];
                let n = g.shape()[0];
                let mut gb = vec![R::zero(); f];
                for r in 0..n {
                    for c in 0..f {
                        gb[c] += g.data()[r * f + c];
                    }
                }
                accumulate(&mut grads[x], g.clone());
                accumulate(&mut grads[b], Tensor::new(vec![f], gb));
            }
            Payload::AddChannelBias(x, b) => {
                let (n, c, hw) = (g.shape()[0], g.shape()[1], g.shape()[2] * g.shape()[3]);
                let mut gb = vec![R::zero(); c];
                for i0 in 0..n {
                    for ch in 0..c {
                        let base = (i0 * c + ch) * hw;
                        for k in 0..hw {
                            gb[ch] += g.data()[base + k];
                        }
                    }
                }
                accumulate(&mut grads[x], g.clone());
                accumulate(&mut grads[b], Tensor::new(vec![c], gb));
            }
            Payload::MatMul(a, b) => {
                let (va, vb) = (&inner.nodes[a].value, &inner.nodes[b].value);
                let ga = matmul_nt(&g, vb); // g . b^T
                let gb = matmul_tn(va, &g); // a^T . g
                accumulate(&mut grads[a], ga);
                accumulate(&mut grads[b], gb);
            }
            Payload::Conv2d(x, k) => {
                let (vx, vk) = (&inner.nodes[x].value, &inner.nodes[k].value);
                let (gx, gk) = conv2d_bw(vx, vk, &g);
                accumulate(&mut grads[x], gx);
                accumulate(&mut grads[k], gk);
            }
            Payload::Relu(a) => {
                let va = &inner.nodes[a].value;
                let data = g
                    .data()
                    .iter()
                    .zip(va.data())
                    .map(|(&gv, &xv)| if xv > R::zero() { gv } else { R::zero() })
                    .collect();
                accumulate(&mut grads[a], Tensor::new(g.shape().to_vec(), data));
            }
            Payload::Sigmoid(a) => {
                let s = &inner.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(s.data())
                    .map(|(&gv, &sv)| gv * sv * (R::one() - sv))
                    .collect();
                accumulate(&mut grads[a], Tensor::new(g.shape().to_vec(), data));
            }
            Payload::Tanh(a) => {
                let s = &inner.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(s.data())
                    .map(|(&gv, &sv)| gv * (R::one() - sv * sv))
                    .collect();
                accumulate(&mut grads[a], Tensor::new(g.shape().to_vec(), data));
            }
            Payload::Ln(a) => {
                let va = &inner.nodes[a].value;
                let data = g.data().iter().zip(va.data()).map(|(&gv, &xv)| gv / xv).collect();
                accumulate(&mut grads[a], Tensor::new(g.shape().to_vec(), data));
            }
            Payload::Softmax(a) => {
                let s = &inner.nodes[i].value;
                let last = *s.shape().last().unwrap();
                let rows = s.numel() / last;
                let mut data = vec![R::zero(); s.numel()];
                for r in 0..rows {
                    let srow = &s.data()[r * last..(r + 1) * last];
                    let grow = &g.data()[r * last..(r + 1) * last];
                    let dot = srow
                        .iter()
                        .zip(grow)
                        .fold(R::zero(), |acc, (&sv, &gv)| acc + sv * gv);
                    for c in 0..last {
                        data[r * last + c] = srow[c] * (grow[c] - dot);
                    }
                }
                accumulate(&mut grads[a], Tensor::new(s.shape().to_vec(), data));
            }
            Payload::Sum(a) => {
                let shape = inner.nodes[a].value.shape().to_vec();
                let n: usize = shape.iter().product();
                let gv = g.item();
                accumulate(&mut grads[a], Tensor::new(shape, vec![gv; n]));
            }
            Payload::Mean(a) => {
                let shape = inner.nodes[a].value.shape().to_vec();
                let n: usize = shape.iter().product();
                let gv = g.item() / R::of_usize(n);
                accumulate(&mut grads[a], Tensor::new(shape, vec![gv; n]));
            }
            Payload::Reshape(a) => {
                let shape = inner.nodes[a].value.shape().to_vec();
                accumulate(&mut grads[a], Tensor::new(shape, g.data().to_vec()));
            }
        }
    }
    set.note_backward();
    inner.nodes.clear();
    inner.leases.clear();
    Ok(())
}

fn accumulate<R: Real>(slot: &mut Option<Tensor<R>>, contrib: Tensor<R>) {
    match slot {
        None => *slot = Some(contrib),
        Some(acc) => {
            debug_assert_eq!(acc.shape(), contrib.shape());
            for (a, b) in acc.data_mut().iter_mut().zip(contrib.data()) {
                *a += *b;
            }
        }
    }
}

fn negate<R: Real>(t: &Tensor<R>) -> Tensor<R> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| -v).collect())
}

fn hadamard<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect())
}

/// `(p, q) x (q, r)`.
fn matmul_fw<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    let (p, q, r) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![R::zero(); p * r];
    for i in 0..p {
        for k in 0..q {
            let aik = a.data()[i * q + k];
            for j in 0..r {
                out[i * r + j] += aik * b.data()[k * r + j];
            }
        }
    }
    Tensor::new(vec![p, r], out)
}

/// `g (p, r) x b^T (r, q) -> (p, q)`.
fn matmul_nt<R: Real>(g: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    let (p, r) = (g.shape()[0], g.shape()[1]);
    let q = b.shape()[0];
    let mut out = vec![R::zero(); p * q];
    for i in 0..p {
        for j in 0..r {
            let gij = g.data()[i * r + j];
            for k in 0..q {
                out[i * q + k] += gij * b.data()[k * r + j];
            }
        }
    }
    Tensor::new(vec![p, q], out)
}

/// `a^T (q, p) x g (p, r) -> (q, r)`.
fn matmul_tn<R: Real>(a: &Tensor<R>, g: &Tensor<R>) -> Tensor<R> {
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let r = g.shape()[1];
    let mut out = vec![R::zero(); q * r];
    for i in 0..p {
        for k in 0..q {
            let aik = a.data()[i * q + k];
            for j in 0..r {
                out[k * r + j] += aik * g.data()[i * r + j];
            }
        }
    }
    Tensor::new(vec![q, r], out)
}

fn idx4(c: usize, h: usize, w: usize, i: usize, j: usize, y: usize, x: usize) -> usize {
    ((i * c + j) * h + y) * w + x
}

fn conv2d_fw<R: Real>(x: &Tensor<R>, k: &Tensor<R>) -> Tensor<R> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, _, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![R::zero(); n * co * oh * ow];
    for b in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = R::zero();
                    for c in 0..ci {
                        for p in 0..kh {
                            for q in 0..kw {
                                acc += x.data()[idx4(ci, h, w, b, c, y + p, xx + q)]
                                    * k.data()[idx4(ci, kh, kw, o, c, p, q)];
                            }
                        }
                    }
                    out[idx4(co, oh, ow, b, o, y, xx)] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, co, oh, ow], out)
}

fn conv2d_bw<R: Real>(
    x: &Tensor<R>,
    k: &Tensor<R>,
    g: &Tensor<R>,
) -> (Tensor<R>, Tensor<R>) {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, _, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut gx = vec![R::zero(); x.numel()];
    let mut gk = vec![R::zero(); k.numel()];
    for b in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let gv = g.data()[idx4(co, oh, ow, b, o, y, xx)];
                    if gv == R::zero() {
                        continue;
                    }
                    for c in 0..ci {
                        for p in 0..kh {
                            for q in 0..kw {
                                let xi = idx4(ci, h, w, b, c, y + p, xx + q);
                                let ki = idx4(ci, kh, kw, o, c, p, q);
                                gx[xi] += gv * k.data()[ki];
                                gk[ki] += gv * x.data()[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    (Tensor::new(x.shape().to_vec(), gx), Tensor::new(k.shape().to_vec(), gk))
}
