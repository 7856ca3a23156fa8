//! The Synthetic Objects dataset: the full Cartesian product of four
//! categorical attributes with ten values each, split 80/10/10 and batched
//! without replacement.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ATTRIBUTES, ATTRIBUTE_VALUES, OBJECT_DIM};
use crate::numcore::{NumError, Result};

pub const NUM_OBJECTS: usize = 10_000;

/// One dataset item; `id` is the base-10 encoding of the attribute tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub id: usize,
    pub attributes: [usize; ATTRIBUTES],
    pub one_hot: Vec<f64>,
}

impl ObjectRecord {
    pub fn from_id(id: usize) -> Self {
        assert!(id < NUM_OBJECTS);
        let mut attributes = [0usize; ATTRIBUTES];
        let mut rest = id;
        for a in (0..ATTRIBUTES).rev() {
            attributes[a] = rest % ATTRIBUTE_VALUES;
            rest /= ATTRIBUTE_VALUES;
        }
        let mut one_hot = vec![0.0; OBJECT_DIM];
        for (a, &v) in attributes.iter().enumerate() {
            one_hot[a * ATTRIBUTE_VALUES + v] = 1.0;
        }
        ObjectRecord { id, attributes, one_hot }
    }

    pub fn from_attributes(attributes: [usize; ATTRIBUTES]) -> Self {
        let id = attributes.iter().fold(0, |acc, &v| acc * ATTRIBUTE_VALUES + v);
        Self::from_id(id)
    }
}

/// All 10,000 objects in deterministic id order.
pub fn generate_objects() -> Vec<ObjectRecord> {
    (0..NUM_OBJECTS).map(ObjectRecord::from_id).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded uniform shuffle of all ids, partitioned 8000/1000/1000.
pub fn split<R: Rng>(rng: &mut R) -> DatasetSplit {
    let mut ids: Vec<usize> = (0..NUM_OBJECTS).collect();
    ids.shuffle(rng);
    let test = ids.split_off(9_000);
    let valid = ids.split_off(8_000);
    DatasetSplit { train: ids, valid, test }
}

/// A batch that doubles as the candidate set: every row serves as target
/// once against the other rows as distractors.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub objects: Vec<ObjectRecord>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Concatenated one-hot rows, `[B, 40]` row-major.
    pub fn one_hots(&self) -> Vec<f64> {
        self.objects.iter().flat_map(|o| o.one_hot.iter().copied()).collect()
    }
}

/// Samples B distinct objects uniformly from a split part.
pub fn sample_batch<R: Rng>(part: &[usize], b: usize, rng: &mut R) -> Result<CandidateSet> {
    if b > part.len() {
        return Err(NumError::Domain {
            op: "sample_batch",
            what: format!("batch size {b} exceeds split size {}", part.len()),
        });
    }
    let ids: Vec<usize> = part.choose_multiple(rng, b).copied().collect();
    Ok(CandidateSet { objects: ids.into_iter().map(ObjectRecord::from_id).collect() })
}

/// Epoch iteration: shuffle the split once, then cut consecutive batches.
/// The trailing remainder shorter than `b` is dropped.
pub fn epoch_batches<R: Rng>(part: &[usize], b: usize, rng: &mut R) -> Vec<CandidateSet> {
    let mut ids = part.to_vec();
    ids.shuffle(rng);
    ids.chunks_exact(b)
        .map(|chunk| CandidateSet { objects: chunk.iter().map(|&id| ObjectRecord::from_id(id)).collect() })
        .collect()
}
