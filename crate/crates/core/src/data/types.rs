use serde::{Deserialize, Serialize};

use super::error::{DataError, Result};

/// Width of every patch feature vector.
pub const FEATURE_DIM: usize = 128;

/// Number of tabular clinical descriptors per patient.
pub const CLINICAL_DIM: usize = 6;

/// Manifest column names for the six clinical features, in schema order.
pub const CLINICAL_FIELDS: [&str; CLINICAL_DIM] = [
    "age",
    "psa",
    "t_stage",
    "gleason_primary",
    "gleason_secondary",
    "gleason_sum",
];

/// Variable-length bag of patch feature rows for one slide: K × 128, K ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBag {
    k: usize,
    data: Vec<f32>, // row-major K × FEATURE_DIM
}

impl ImageBag {
    pub fn new(k: usize, data: Vec<f32>) -> Result<Self> {
        if k == 0 {
            return Err(DataError::Format("bag must have at least one patch".into()));
        }
        if data.len() != k * FEATURE_DIM {
            return Err(DataError::Format(format!(
                "bag data length {} != {k} x {FEATURE_DIM}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(DataError::Format("bag contains non-finite values".into()));
        }
        Ok(ImageBag { k, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }
}

/// The six clinical risk descriptors, kept in `CLINICAL_FIELDS` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalVector(pub [f64; CLINICAL_DIM]);

impl ClinicalVector {
    pub fn values(&self) -> &[f64; CLINICAL_DIM] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// One patient: id, feature bag, clinical vector, and the binary
/// distant-metastasis label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub bag: ImageBag,
    pub clinical: ClinicalVector,
    pub label: u8,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(DataError::Integrity {
                id: self.id.clone(),
                reason: format!("label {} is not binary", self.label),
            });
        }
        if !self.clinical.is_finite() {
            return Err(DataError::Integrity {
                id: self.id.clone(),
                reason: "clinical vector contains non-finite values".into(),
            });
        }
        Ok(())
    }
}

/// Per-feature standardization statistics, always taken from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardStats {
    pub mean: [f64; CLINICAL_DIM],
    /// Population standard deviation; zero-variance features fall back to 1.
    pub std: [f64; CLINICAL_DIM],
}

/// An immutable collection of patient records with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<PatientRecord>,
    stats: Option<StandardStats>,
}

impl Dataset {
    pub fn new(records: Vec<PatientRecord>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.clone()) {
                return Err(DataError::Integrity {
                    id: r.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Dataset {
            records,
            stats: None,
        })
    }

    pub(crate) fn with_stats(records: Vec<PatientRecord>, stats: StandardStats) -> Self {
        Dataset {
            records,
            stats: Some(stats),
        }
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn stats(&self) -> Option<&StandardStats> {
        self.stats.as_ref()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn positive_count(&self) -> usize {
        self.records.iter().filter(|r| r.label == 1).count()
    }

    /// Subset by record indices, preserving order. Stats are not carried over.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            stats: None,
        }
    }
}
