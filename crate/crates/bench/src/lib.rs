//! Deterministic workloads shared by the benchmarks.

use aia_core::data::{gen_poisson_patterns, Dataset, PoissonConfig};
use aia_core::{init_network, Network, NetworkSpec, NeuronModel};

/// A 64-input, 4-class Poisson batch with `batch` samples and `T = 10`.
pub fn poisson_batch(batch: usize) -> Dataset {
    let per_class = batch.div_ceil(4);
    let ds = gen_poisson_patterns(&PoissonConfig {
        class_count: 4,
        neurons: 64,
        timesteps: 10,
        rate_lo: 0.0,
        rate_hi: 0.5,
        n_per_class: per_class,
        seed: 0,
    })
    .expect("valid generator config");
    let indices: Vec<usize> = (0..batch).map(|k| (k % 4) * per_class + k / 4).collect();
    ds.subset(&indices, ds.split)
}

/// 64 -> `hidden` -> 4 network of the given model.
pub fn network(model: NeuronModel, hidden: usize) -> Network {
    init_network(&NetworkSpec::uniform(64, &[hidden, 4], model, 10), 0).expect("valid network spec")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_is_class_balanced() {
        let ds = poisson_batch(10);
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.labels[..4], [0, 1, 2, 3]);
        assert_eq!(network(NeuronModel::Aia, 16).input_width(), ds.inputs.neurons());
    }
}
