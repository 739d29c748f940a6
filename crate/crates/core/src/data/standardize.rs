//! Clinical-feature standardization.
//!
//! Statistics always come from a training split and are applied to whichever
//! split is passed in — never recomputed on held-out data.

use super::error::{DataError, Result};
use super::types::{ClinicalVector, Dataset, StandardStats, CLINICAL_DIM};

/// Per-feature mean and population std of the split's clinical features.
/// Zero-variance features get std 1 so they standardize to a constant 0.
pub fn clinical_stats(train_split: &Dataset) -> Result<StandardStats> {
    if train_split.is_empty() {
        return Err(DataError::Usage(
            "standardization statistics need a non-empty training split".into(),
        ));
    }
    let n = train_split.len() as f64;
    let mut mean = [0.0f64; CLINICAL_DIM];
    for r in train_split.records() {
        for (m, v) in mean.iter_mut().zip(r.clinical.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = [0.0f64; CLINICAL_DIM];
    for r in train_split.records() {
        for (j, v) in r.clinical.values().iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let mut std = [0.0f64; CLINICAL_DIM];
    for j in 0..CLINICAL_DIM {
        let s = (var[j] / n).sqrt();
        std[j] = if s > 0.0 { s } else { 1.0 };
    }
    Ok(StandardStats { mean, std })
}

/// Z-score every clinical feature of `apply_to` using `train_split` stats.
/// The returned dataset carries the stats it was standardized with.
pub fn standardize(train_split: &Dataset, apply_to: &Dataset) -> Result<Dataset> {
    let stats = clinical_stats(train_split)?;
    Ok(apply_with_stats(apply_to, &stats))
}

/// Apply existing statistics (e.g. at inference time, from a checkpointed run).
pub fn apply_with_stats(dataset: &Dataset, stats: &StandardStats) -> Dataset {
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let mut z = [0.0f64; CLINICAL_DIM];
            for j in 0..CLINICAL_DIM {
                z[j] = (r.clinical.0[j] - stats.mean[j]) / stats.std[j];
            }
            let mut out = r.clone();
            out.clinical = ClinicalVector(z);
            out
        })
        .collect();
    Dataset::with_stats(records, stats.clone())
}
