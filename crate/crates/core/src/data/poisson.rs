use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, SpikeTensor, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    pub class_count: usize,
    pub neurons: usize,
    pub timesteps: usize,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub n_per_class: usize,
    pub seed: u64,
}

impl PoissonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.rate_lo && self.rate_lo < self.rate_hi && self.rate_hi <= 1.0) {
            return Err(Error::Config(format!(
                "rates must satisfy 0 <= rate_lo < rate_hi <= 1, got [{}, {}]",
                self.rate_lo, self.rate_hi
            )));
        }
        if self.class_count == 0 || self.neurons == 0 || self.timesteps == 0 || self.n_per_class == 0 {
            return Err(Error::Config(
                "class_count, neurons, timesteps and n_per_class must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-class rate templates with independent Bernoulli spikes per sample.
///
/// Samples are ordered class-major. Templates are drawn first, then samples,
/// all from one seeded stream.
pub fn gen_poisson_patterns(cfg: &PoissonConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates: Vec<Vec<f64>> = (0..cfg.class_count)
        .map(|_| {
            (0..cfg.neurons)
                .map(|_| rng.random_range(cfg.rate_lo..=cfg.rate_hi))
                .collect()
        })
        .collect();

    let total = cfg.class_count * cfg.n_per_class;
    let mut data = Vec::with_capacity(total * cfg.neurons * cfg.timesteps);
    let mut labels = Vec::with_capacity(total);
    for (c, template) in templates.iter().enumerate() {
        for _ in 0..cfg.n_per_class {
            for &rate in template {
                for _ in 0..cfg.timesteps {
                    data.push(if rng.random::<f64>() < rate { 1.0 } else { 0.0 });
                }
            }
            labels.push(c);
        }
    }
    let inputs = SpikeTensor::new(total, cfg.neurons, cfg.timesteps, data)?;
    Dataset::new(inputs, labels, cfg.class_count, Split::All)
}
