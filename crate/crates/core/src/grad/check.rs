//! Finite-difference gradient checking.
//!
//! Runs in f64 with dropout in eval mode: one analytic backward pass is
//! compared against central differences over every trainable parameter
//! scalar. The loss closure maps graph activations to a scalar plus the seed
//! gradients used for the analytic pass, so the same harness checks single
//! layers and whole models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::error::{GradError, Result};
use super::graph::{Activations, LayerGraph, NodeId};
use super::layer::Mode;
use super::tensor::Tensor;

/// Central-difference step used throughout the test suites.
pub const CHECK_EPS: f64 = 1e-5;

/// Scalar loss over one forward pass: returns the loss value and the
/// upstream gradients to seed backward with.
pub type LossFn<'a> = dyn Fn(&Activations<f64>) -> Result<(f64, Vec<(NodeId, Tensor<f64>)>)> + 'a;

/// Relative error with an absolute floor so near-zero pairs compare sanely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compare analytic parameter gradients against central finite differences.
///
/// Returns the worst relative error across every trainable parameter scalar.
/// The graph is restored to its original parameter values afterwards.
pub fn grad_check(
    graph: &mut LayerGraph<f64>,
    externals: &[Tensor<f64>],
    loss: &LossFn,
    eps: f64,
) -> Result<f64> {
    // Dropout never draws in eval mode, so the rng seed is irrelevant here.
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    graph.zero_grads();
    let acts = graph.forward(externals, Mode::Eval, &mut rng)?;
    let (loss0, seeds) = loss(&acts)?;
    if !loss0.is_finite() {
        return Err(GradError::NonFinite {
            layer: "loss".into(),
        });
    }
    graph.backward(externals, &acts, &seeds)?;

    let analytic: Vec<Vec<f64>> = graph
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let trainable: Vec<bool> = graph.params().iter().map(|p| p.trainable).collect();

    let mut worst = 0.0f64;
    let n_params = analytic.len();
    for pi in 0..n_params {
        if !trainable[pi] {
            continue;
        }
        for si in 0..analytic[pi].len() {
            let orig = graph.params_mut()[pi].value.data()[si];

            graph.params_mut()[pi].value.data_mut()[si] = orig + eps;
            let up = graph.forward(externals, Mode::Eval, &mut rng)?;
            let (lp, _) = loss(&up)?;

            graph.params_mut()[pi].value.data_mut()[si] = orig - eps;
            let dn = graph.forward(externals, Mode::Eval, &mut rng)?;
            let (lm, _) = loss(&dn)?;

            graph.params_mut()[pi].value.data_mut()[si] = orig;
            if !lp.is_finite() || !lm.is_finite() {
                return Err(GradError::NonFinite {
                    layer: "loss".into(),
                });
            }
            let fd = (lp - lm) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[pi][si], fd));
        }
    }
    Ok(worst)
}
