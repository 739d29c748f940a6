//! Scalar loss functions with analytic gradients.
//!
//! Losses live outside the layer graph: callers compute the loss on graph
//! outputs and seed the backward pass with the returned gradients. Batch
//! reduction is always the mean, applied by the caller (scale each record's
//! seed by 1/batch).

use super::error::{GradError, Result};
use super::tensor::{Scalar, Tensor};

/// Probability clamp bound for the cross-entropy log.
pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy on a probability: `−[y·ln p + (1−y)·ln(1−p)]`.
///
/// `p` is clamped to `[BCE_EPS, 1−BCE_EPS]`; outside the clamp the gradient
/// is exactly zero (the clamped composite is constant there), which keeps
/// finite-difference checks consistent everywhere but the clamp boundary.
///
/// Returns `(loss, dloss/dp)`.
pub fn bce_loss<S: Scalar>(p: S, y: u8) -> Result<(S, S)> {
    if y > 1 {
        return Err(GradError::InvalidLabel(y));
    }
    let lo = S::from_f64(BCE_EPS);
    let hi = S::one() - lo;
    let clamped = p < lo || p > hi;
    let pc = if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    };
    let (loss, grad) = if y == 1 {
        (-pc.ln(), -pc.recip())
    } else {
        (-(S::one() - pc).ln(), (S::one() - pc).recip())
    };
    Ok((loss, if clamped { S::zero() } else { grad }))
}

/// Mean squared error over equal-shaped tensors.
///
/// Returns `(loss, dloss/dprediction)` with gradient `(2/n)(x̂ − x)`.
pub fn mse_loss<S: Scalar>(prediction: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if prediction.shape() != target.shape() {
        return Err(GradError::ShapeMismatch {
            op: "mse_loss".into(),
            expected: target.shape().to_vec(),
            got: prediction.shape().to_vec(),
        });
    }
    let n = S::from_f64(prediction.len() as f64);
    let mut loss = S::zero();
    let mut grad = Vec::with_capacity(prediction.len());
    for (&a, &b) in prediction.data().iter().zip(target.data()) {
        let d = a - b;
        loss = loss + d * d;
        grad.push(S::from_f64(2.0) * d / n);
    }
    Ok((
        loss / n,
        Tensor::new(prediction.shape().to_vec(), grad).expect("same shape"),
    ))
}
