//! Stratified k-fold assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::error::{DataError, Result};
use super::types::Dataset;

/// A complete fold assignment: every record id maps to exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.assignments
    }

    /// Record indices of `dataset` held out in `fold`.
    pub fn test_indices(&self, dataset: &Dataset, fold: usize) -> Vec<usize> {
        self.indices_where(dataset, |f| f == fold)
    }

    /// Record indices of `dataset` used for training in `fold`.
    pub fn train_indices(&self, dataset: &Dataset, fold: usize) -> Vec<usize> {
        self.indices_where(dataset, |f| f != fold)
    }

    fn indices_where(&self, dataset: &Dataset, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        dataset
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                let f = self.assignments.get(&r.id).copied();
                matches!(f, Some(f) if keep(f))
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks that the plan covers `dataset` exactly: every record assigned,
    /// nothing extra.
    pub fn covers(&self, dataset: &Dataset) -> bool {
        self.assignments.len() == dataset.len()
            && dataset
                .records()
                .iter()
                .all(|r| self.assignments.contains_key(&r.id))
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// so per-class fold sizes differ by at most one.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(DataError::Usage(format!(
            "k-fold needs k >= 2 (k = {k} leaves no held-out data)"
        )));
    }
    let mut by_class: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for r in dataset.records() {
        by_class[r.label as usize].push(&r.id);
    }
    for (class, ids) in by_class.iter().enumerate() {
        if ids.len() < k {
            return Err(DataError::Stratification {
                class: class as u8,
                count: ids.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    for ids in by_class.iter_mut() {
        ids.shuffle(&mut rng);
        for (i, id) in ids.iter().enumerate() {
            assignments.insert((*id).to_string(), i % k);
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}
