//! Synthetic paired-data generator.
//!
//! Stands in for the private clinical dataset: each patient gets a latent
//! risk score; the label is Bernoulli in a logistic link of that score, the
//! clinical vector is an affine image of the score plus noise shrunk by the
//! cross-modal correlation, and the image bag is patch-level noise around a
//! latent-dependent prototype. Everything is drawn from a ChaCha8 stream, so
//! a seed fully determines the dataset on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::split_seed;

use super::error::{DataError, Result};
use super::types::{ClinicalVector, Dataset, ImageBag, PatientRecord, CLINICAL_DIM, FEATURE_DIM};

/// Per-feature affine map from latent score to clinical value: offset + slope,
/// in `CLINICAL_FIELDS` order. Noise std is `(1 − correlation) · slope`.
const CLINICAL_OFFSET: [f64; CLINICAL_DIM] = [65.0, 12.0, 2.0, 3.5, 3.5, 7.0];
const CLINICAL_SLOPE: [f64; CLINICAL_DIM] = [6.0, 8.0, 0.7, 0.8, 0.8, 1.6];

/// Std of patch noise around the latent-dependent prototype.
const PATCH_NOISE: f64 = 0.5;

/// Sub-stream index for the prototype direction draws.
const PROTO_STREAM: u64 = 0xbad5eed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub n_patients: usize,
    /// Inclusive bounds on patches per bag.
    pub k_min: usize,
    pub k_max: usize,
    /// Slope of the logistic link from latent score to label probability.
    /// Zero makes labels independent of all features.
    pub signal_strength: f64,
    /// In [0, 1]; 1 makes the clinical vector an exact affine image of the
    /// latent score.
    pub cross_modal_correlation: f64,
    /// Marginal positive-class probability, in (0, 1).
    pub positive_rate: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 10 {
            return Err(DataError::Usage(format!(
                "n_patients must be at least 10, got {}",
                self.n_patients
            )));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(DataError::Usage(format!(
                "positive_rate must lie in (0, 1), got {}",
                self.positive_rate
            )));
        }
        if self.k_min < 1 || self.k_max > 512 || self.k_min > self.k_max {
            return Err(DataError::Usage(format!(
                "patch range [{}, {}] must satisfy 1 <= k_min <= k_max <= 512",
                self.k_min, self.k_max
            )));
        }
        if !(0.0..=1.0).contains(&self.cross_modal_correlation) {
            return Err(DataError::Usage(format!(
                "cross_modal_correlation must lie in [0, 1], got {}",
                self.cross_modal_correlation
            )));
        }
        if !self.signal_strength.is_finite() || self.signal_strength < 0.0 {
            return Err(DataError::Usage(format!(
                "signal_strength must be finite and non-negative, got {}",
                self.signal_strength
            )));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// E[σ(s·z + b)] for z ~ N(0,1), by Simpson quadrature on [-8, 8].
fn marginal_rate(s: f64, b: f64) -> f64 {
    let n = 2048; // even
    let (lo, hi) = (-8.0f64, 8.0f64);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| sigmoid(s * z + b) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Intercept b with E[σ(s·z + b)] = rate, by bisection (monotone in b).
fn solve_intercept(s: f64, rate: f64) -> f64 {
    if s == 0.0 {
        return (rate / (1.0 - rate)).ln();
    }
    let (mut lo, mut hi) = (-50.0 - 10.0 * s, 50.0 + 10.0 * s);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if marginal_rate(s, mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Generate a synthetic dataset. Bit-identical for identical params.
pub fn synth_generate(params: &SynthParams) -> Result<Dataset> {
    params.validate()?;
    let s = params.signal_strength;
    let intercept = solve_intercept(s, params.positive_rate);

    // Prototype mean and latent direction live on their own stream so the
    // per-patient draw order stays simple.
    let mut proto_rng = ChaCha8Rng::seed_from_u64(split_seed(params.seed, PROTO_STREAM));
    let proto_mean: Vec<f64> = (0..FEATURE_DIM)
        .map(|_| 0.5 * proto_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut direction: Vec<f64> = (0..FEATURE_DIM)
        .map(|_| proto_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise_scale = 1.0 - params.cross_modal_correlation;
    let mut records = Vec::with_capacity(params.n_patients);
    for i in 0..params.n_patients {
        let latent: f64 = rng.sample(StandardNormal);
        let label = u8::from(rng.random::<f64>() < sigmoid(s * latent + intercept));

        let mut clinical = [0.0f64; CLINICAL_DIM];
        for (j, c) in clinical.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            *c = CLINICAL_OFFSET[j]
                + CLINICAL_SLOPE[j] * (latent + noise_scale * eps);
        }

        let k = rng.random_range(params.k_min..=params.k_max);
        let mut bag = Vec::with_capacity(k * FEATURE_DIM);
        for _ in 0..k {
            for d in 0..FEATURE_DIM {
                let eta: f64 = rng.sample(StandardNormal);
                bag.push((proto_mean[d] + latent * direction[d] + PATCH_NOISE * eta) as f32);
            }
        }

        records.push(PatientRecord {
            id: format!("p{i:05}"),
            bag: ImageBag::new(k, bag).expect("sized above"),
            clinical: ClinicalVector(clinical),
            label,
        });
    }

    let positives = records.iter().filter(|r| r.label == 1).count();
    if positives == 0 || positives == records.len() {
        return Err(DataError::Generation(format!(
            "generated a single-class dataset ({positives}/{} positive); \
             retry with a larger n_patients, a less extreme positive_rate, \
             or a different seed",
            records.len()
        )));
    }
    Dataset::new(records)
}
