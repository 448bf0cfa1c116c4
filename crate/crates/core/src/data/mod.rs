//! Spike datasets: synthetic generation, event-file ingestion, and binning.

mod cache;
mod events;
mod poisson;
mod spikes;

pub use cache::{binning_hash, decode_cache, encode_cache, load_cache, save_cache, CACHE_MAGIC, CACHE_VERSION};
pub use events::{
    bin_events, load_events_csv, load_manifest, BinningParams, EventRecord, LabeledStream, ManifestEntry, ParseReport,
};
pub use poisson::{gen_poisson_patterns, PoissonConfig};
pub use spikes::SpikeTensor;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: SpikeTensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: SpikeTensor, labels: Vec<usize>, class_count: usize, split: Split) -> Result<Self> {
        if labels.len() != inputs.batch() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                inputs.batch()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> Dataset {
        Dataset {
            inputs: self.inputs.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split,
        }
    }

    /// Stratified train/test split: each class contributes
    /// `round(count * test_fraction)` samples to the test side.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for c in 0..self.class_count {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let n_test = (members.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&members[..n_test]);
            train.extend_from_slice(&members[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train, Split::Train), self.subset(&test, Split::Test)))
    }
}
