//! Differentiable layers.
//!
//! Each layer is a deterministic forward map plus an exact backward map.
//! Backward receives the layer's forward inputs, its forward output, and the
//! upstream gradient; it accumulates parameter gradients in place and returns
//! one gradient tensor per input. Layers that need forward state beyond
//! inputs/output (dropout masks, attention gates) cache it during forward,
//! which is why execution of one graph is single-threaded.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::error::{GradError, Result};
use super::param::Param;
use super::tensor::{Scalar, Tensor};

/// Forward execution mode. Only dropout distinguishes the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub trait LayerOp<S: Scalar>: Send {
    /// Layer kind, used in error messages.
    fn kind(&self) -> &'static str;

    fn forward(
        &mut self,
        inputs: &[&Tensor<S>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>>;

    /// Gradients w.r.t. each input, in input order. Parameter gradients are
    /// accumulated (`+=`) so one batch can run many backward passes.
    fn backward(
        &mut self,
        inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>>;

    fn params(&self) -> Vec<&Param<S>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        Vec::new()
    }
}

fn shape_err<S: Scalar>(op: &str, expected: &[usize], got: &Tensor<S>) -> GradError {
    GradError::ShapeMismatch {
        op: op.into(),
        expected: expected.to_vec(),
        got: got.shape().to_vec(),
    }
}

fn sigmoid_s<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

/// Glorot-uniform weight in ±sqrt(6 / (fan_in + fan_out)); draws one f64.
fn glorot<S: Scalar>(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> S {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    S::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound)
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// Fully-connected map `y = W·x + b` over a 1-D input.
pub struct Linear<S: Scalar> {
    pub w: Param<S>, // n_out × n_in, row-major
    pub b: Param<S>, // n_out
    n_in: usize,
    n_out: usize,
}

impl<S: Scalar> Linear<S> {
    pub fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let w: Vec<S> = (0..n_in * n_out).map(|_| glorot(n_in, n_out, rng)).collect();
        Linear {
            w: Param::new(Tensor::new(vec![n_out, n_in], w).expect("sized above")),
            b: Param::new(Tensor::zeros(vec![n_out])),
            n_in,
            n_out,
        }
    }

    pub fn from_params(w: Tensor<S>, b: Tensor<S>) -> Result<Self> {
        if w.shape().len() != 2 {
            return Err(shape_err("linear weights", &[0, 0], &w));
        }
        let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
        if b.shape() != [n_out] {
            return Err(shape_err("linear bias", &[n_out], &b));
        }
        Ok(Linear {
            w: Param::new(w),
            b: Param::new(b),
            n_in,
            n_out,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }
}

impl<S: Scalar> LayerOp<S> for Linear<S> {
    fn kind(&self) -> &'static str {
        "linear"
    }

    fn forward(&mut self, inputs: &[&Tensor<S>], _: Mode, _: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        let x = inputs[0];
        if x.shape() != [self.n_in] {
            return Err(shape_err("linear", &[self.n_in], x));
        }
        let xd = x.data();
        let b = self.b.value.data();
        let mut y = vec![S::zero(); self.n_out];
        for (o, wrow) in self.w.value.data().chunks_exact(self.n_in).enumerate() {
            let mut acc = S::zero();
            for (wi, xi) in wrow.iter().zip(xd.iter()) {
                acc = acc + *wi * *xi;
            }
            y[o] = acc + b[o];
        }
        Ok(Tensor::vector(y))
    }

    fn backward(
        &mut self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let x = inputs[0];
        if upstream.shape() != [self.n_out] {
            return Err(shape_err("linear backward", &[self.n_out], upstream));
        }
        let xd = x.data();
        let u = upstream.data();
        let gw = self.w.grad.data_mut();
        let gb = self.b.grad.data_mut();
        let mut gx = vec![S::zero(); self.n_in];
        for (o, wrow) in self.w.value.data().chunks_exact(self.n_in).enumerate() {
            let uo = u[o];
            gb[o] = gb[o] + uo;
            let gwrow = &mut gw[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                gwrow[i] = gwrow[i] + uo * xd[i];
                gx[i] = gx[i] + uo * wrow[i];
            }
        }
        Ok(vec![Tensor::vector(gx)])
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.w, &mut self.b]
    }
}

// ---------------------------------------------------------------------------
// Sigmoid
// ---------------------------------------------------------------------------

/// Elementwise logistic function. Saturates instead of overflowing.
pub struct Sigmoid;

impl<S: Scalar> LayerOp<S> for Sigmoid {
    fn kind(&self) -> &'static str {
        "sigmoid"
    }

    fn forward(&mut self, inputs: &[&Tensor<S>], _: Mode, _: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        let x = inputs[0];
        Ok(Tensor::new(
            x.shape().to_vec(),
            x.data().iter().map(|&z| sigmoid_s(z)).collect(),
        )
        .expect("same shape"))
    }

    fn backward(
        &mut self,
        _inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let g = output
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&y, &u)| u * y * (S::one() - y))
            .collect();
        Ok(vec![Tensor::new(output.shape().to_vec(), g).expect("same shape")])
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout: train mode zeroes each element with probability `rate`
/// and scales survivors by 1/(1−rate); eval mode is the exact identity.
pub struct Dropout<S: Scalar> {
    rate: f64,
    /// Per-element multipliers from the last train-mode forward; empty after
    /// an eval-mode forward (backward then passes gradients through).
    mask: Vec<S>,
}

impl<S: Scalar> Dropout<S> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(GradError::InvalidDropoutRate(rate));
        }
        Ok(Dropout { rate, mask: Vec::new() })
    }
}

impl<S: Scalar> LayerOp<S> for Dropout<S> {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(
        &mut self,
        inputs: &[&Tensor<S>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>> {
        let x = inputs[0];
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask.clear();
            return Ok(x.clone());
        }
        let keep_scale = S::from_f64(1.0 / (1.0 - self.rate));
        self.mask = x
            .data()
            .iter()
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    S::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let y = x
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| v * m)
            .collect();
        Ok(Tensor::new(x.shape().to_vec(), y).expect("same shape"))
    }

    fn backward(
        &mut self,
        _inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        if self.mask.is_empty() {
            return Ok(vec![upstream.clone()]);
        }
        let g = upstream
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&u, &m)| u * m)
            .collect();
        Ok(vec![Tensor::new(output.shape().to_vec(), g).expect("same shape")])
    }
}

// ---------------------------------------------------------------------------
// Concat
// ---------------------------------------------------------------------------

/// Order-preserving concatenation of 1-D inputs. Backward splits the
/// upstream gradient at the same offsets, so the round trip is bit-exact.
pub struct Concat;

impl<S: Scalar> LayerOp<S> for Concat {
    fn kind(&self) -> &'static str {
        "concat"
    }

    fn forward(&mut self, inputs: &[&Tensor<S>], _: Mode, _: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        if inputs.is_empty() {
            return Err(GradError::EmptyConcat);
        }
        let mut out = Vec::with_capacity(inputs.iter().map(|t| t.len()).sum());
        for t in inputs {
            if t.shape().len() != 1 {
                return Err(shape_err("concat", &[t.len()], t));
            }
            out.extend_from_slice(t.data());
        }
        Ok(Tensor::vector(out))
    }

    fn backward(
        &mut self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let mut grads = Vec::with_capacity(inputs.len());
        let mut offset = 0;
        for t in inputs {
            let part = upstream.data()[offset..offset + t.len()].to_vec();
            grads.push(Tensor::vector(part));
            offset += t.len();
        }
        Ok(grads)
    }
}

// ---------------------------------------------------------------------------
// Kronecker fusion
// ---------------------------------------------------------------------------

/// Bilinear fusion: appends a constant 1 to each input vector and returns the
/// flattened outer product `[a; 1] ⊗ [b; 1]` (row-major), length
/// `(m+1)(n+1)`. The appended ones preserve the raw unimodal terms inside the
/// bilinear map; the trailing element is always 1.
pub struct KroneckerFuse;

impl<S: Scalar> LayerOp<S> for KroneckerFuse {
    fn kind(&self) -> &'static str {
        "kronecker_fuse"
    }

    fn forward(&mut self, inputs: &[&Tensor<S>], _: Mode, _: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        let (a, b) = (inputs[0], inputs[1]);
        if a.shape().len() != 1 {
            return Err(shape_err("kronecker_fuse lhs", &[a.len()], a));
        }
        if b.shape().len() != 1 {
            return Err(shape_err("kronecker_fuse rhs", &[b.len()], b));
        }
        let (m, n) = (a.len(), b.len());
        let mut out = Vec::with_capacity((m + 1) * (n + 1));
        for i in 0..=m {
            let ai = if i < m { a.data()[i] } else { S::one() };
            for j in 0..=n {
                let bj = if j < n { b.data()[j] } else { S::one() };
                out.push(ai * bj);
            }
        }
        Ok(Tensor::vector(out))
    }

    fn backward(
        &mut self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let (m, n) = (a.len(), b.len());
        let u = upstream.data();
        let mut ga = vec![S::zero(); m];
        let mut gb = vec![S::zero(); n];
        for i in 0..=m {
            let ai = if i < m { a.data()[i] } else { S::one() };
            let urow = &u[i * (n + 1)..(i + 1) * (n + 1)];
            for j in 0..n {
                let bj = b.data()[j];
                if i < m {
                    ga[i] = ga[i] + urow[j] * bj;
                }
                gb[j] = gb[j] + urow[j] * ai;
            }
            if i < m {
                // the [a_i · 1] column
                ga[i] = ga[i] + urow[n];
            }
        }
        Ok(vec![Tensor::vector(ga), Tensor::vector(gb)])
    }
}

// ---------------------------------------------------------------------------
// Gated sum pooling
// ---------------------------------------------------------------------------

/// Attention-gated sum pooling over a bag of feature rows.
///
/// Per row `x_k` the gate computes `a_k = σ(W_g·x_k + b_g)` and the output is
/// `Σ_k a_k ⊙ x_k` — a fixed-width representation independent of K, invariant
/// to row order up to floating-point summation order.
pub struct GatedSumPool<S: Scalar> {
    pub w: Param<S>, // dim × dim
    pub b: Param<S>, // dim
    dim: usize,
    /// Gates from the last forward, K × dim. Needed in backward.
    gates: Vec<S>,
}

impl<S: Scalar> GatedSumPool<S> {
    pub fn new(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w: Vec<S> = (0..dim * dim).map(|_| glorot(dim, dim, rng)).collect();
        GatedSumPool {
            w: Param::new(Tensor::new(vec![dim, dim], w).expect("sized above")),
            b: Param::new(Tensor::zeros(vec![dim])),
            dim,
            gates: Vec::new(),
        }
    }

    pub fn from_params(w: Tensor<S>, b: Tensor<S>) -> Result<Self> {
        let dim = b.len();
        if w.shape() != [dim, dim] {
            return Err(shape_err("gated_sum_pool weights", &[dim, dim], &w));
        }
        Ok(GatedSumPool {
            w: Param::new(w),
            b: Param::new(b),
            dim,
            gates: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl<S: Scalar> LayerOp<S> for GatedSumPool<S> {
    fn kind(&self) -> &'static str {
        "gated_sum_pool"
    }

    fn forward(&mut self, inputs: &[&Tensor<S>], _: Mode, _: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        let bag = inputs[0];
        if bag.shape().len() != 2 || bag.shape()[1] != self.dim {
            return Err(shape_err("gated_sum_pool", &[0, self.dim], bag));
        }
        let k = bag.shape()[0];
        if k == 0 {
            return Err(GradError::EmptyBag);
        }
        let d = self.dim;
        let w = self.w.value.data();
        let b = self.b.value.data();
        self.gates = vec![S::zero(); k * d];
        let mut out = vec![S::zero(); d];
        for patch in 0..k {
            let x = bag.row(patch);
            let gates = &mut self.gates[patch * d..(patch + 1) * d];
            for (o, wrow) in w.chunks_exact(d).enumerate() {
                let mut acc = S::zero();
                for (wi, xi) in wrow.iter().zip(x.iter()) {
                    acc = acc + *wi * *xi;
                }
                let a = sigmoid_s(acc + b[o]);
                gates[o] = a;
                out[o] = out[o] + a * x[o];
            }
        }
        Ok(Tensor::vector(out))
    }

    fn backward(
        &mut self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let bag = inputs[0];
        let k = bag.shape()[0];
        let d = self.dim;
        debug_assert_eq!(self.gates.len(), k * d, "backward without matching forward");
        let u = upstream.data();
        let w = self.w.value.data();
        let mut gbag = vec![S::zero(); k * d];
        for patch in 0..k {
            let x = bag.row(patch);
            let gates = &self.gates[patch * d..(patch + 1) * d];
            let gx = &mut gbag[patch * d..(patch + 1) * d];
            // dz_o = u_o · x_o · a_o · (1 − a_o); the gate sees the whole row,
            // so dz feeds W_g's row o and x gets both the direct and gate paths.
            let mut dz = vec![S::zero(); d];
            for o in 0..d {
                let a = gates[o];
                dz[o] = u[o] * x[o] * a * (S::one() - a);
                gx[o] = gx[o] + u[o] * a;
            }
            let gw = self.w.grad.data_mut();
            let gb = self.b.grad.data_mut();
            for o in 0..d {
                let dzo = dz[o];
                gb[o] = gb[o] + dzo;
                let wrow = &w[o * d..(o + 1) * d];
                let gwrow = &mut gw[o * d..(o + 1) * d];
                for i in 0..d {
                    gwrow[i] = gwrow[i] + dzo * x[i];
                    gx[i] = gx[i] + dzo * wrow[i];
                }
            }
        }
        Ok(vec![Tensor::new(vec![k, d], gbag).expect("sized above")])
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.w, &mut self.b]
    }
}
