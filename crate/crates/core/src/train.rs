//! Mini-batch Adam training over the model zoo.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bptt::{backward_threaded, forward_record, GradientSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{readout_and_loss, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Worker threads for per-sample backward passes. Results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 10,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction, one moment buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network, cfg: &TrainConfig) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.values.len()).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let tensors = grads.tensors();
        for (k, param) in net.params_mut().into_iter().enumerate() {
            let g = tensors[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..param.values.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub shuffle_seed: u64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: String,
    pub epochs: Vec<EpochMetrics>,
    /// Spikes per layer over the test set after the last epoch.
    pub test_spike_counts: Vec<u64>,
}

impl RunMetrics {
    /// `epoch,split,loss,accuracy` rows. Excludes wall-clock time so reruns
    /// are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,loss,accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},train,{},{}", e.epoch, e.train_loss, e.train_accuracy);
            let _ = writeln!(s, "{},test,{},{}", e.epoch, e.test_loss, e.test_accuracy);
        }
        s
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub spike_counts: Vec<u64>,
}

/// Forward-only pass over `data` in fixed order.
pub fn evaluate(net: &Network, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set is empty".into()));
    }
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(data.len());
    let mut counts = vec![0u64; net.layers.len()];
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.subset(chunk, data.split);
        let tape = forward_record(net, &batch.inputs)?;
        let out = readout_and_loss(&tape, &batch.labels)?;
        loss_sum += out.loss * chunk.len() as f64;
        predictions.extend_from_slice(&out.predictions);
        for (c, s) in counts.iter_mut().zip(tape.spike_counts()) {
            *c += s as u64;
        }
    }
    let correct = predictions.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        predictions,
        spike_counts: counts,
    })
}

fn first_non_finite(net: &Network) -> Option<String> {
    net.params().into_iter().find_map(|p| {
        p.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| format!("{}[{i}]", p.name))
    })
}

fn largest_parameter(net: &Network) -> String {
    let mut best = (String::new(), 0.0f64);
    for p in net.params() {
        for (i, v) in p.values.iter().enumerate() {
            if v.abs() > best.1 {
                best = (format!("{}[{i}]", p.name), v.abs());
            }
        }
    }
    format!("largest |value| {:e} at {}", best.1, best.0)
}

/// Numeric failures mid-training are reported as divergence.
fn diverged(net: &Network, epoch: usize, err: Error) -> Error {
    match err {
        Error::Numeric(msg) => {
            let culprit = first_non_finite(net).unwrap_or_else(|| largest_parameter(net));
            Error::Divergence(format!("epoch {epoch}: {msg} ({culprit})"))
        }
        other => other,
    }
}

/// Trains `net` on `train_set`, evaluating on `test_set` after every epoch.
pub fn train(
    net: &Network,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, RunMetrics)> {
    cfg.validate()?;
    net.validate()?;
    for ds in [train_set, test_set] {
        if ds.inputs.neurons() != net.input_width() || ds.inputs.timesteps() != net.timesteps() {
            return Err(Error::Dimension(format!(
                "dataset ({} neurons, {} steps) does not fit network ({} inputs, {} steps)",
                ds.inputs.neurons(),
                ds.inputs.timesteps(),
                net.input_width(),
                net.timesteps()
            )));
        }
        if ds.class_count != net.class_count() {
            return Err(Error::Dimension(format!(
                "dataset has {} classes, network outputs {}",
                ds.class_count,
                net.class_count()
            )));
        }
    }
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }

    let mut net = net.clone();
    let mut adam = Adam::new(&net, cfg);
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let shuffle_seed = seeds.next_u64();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.subset(chunk, train_set.split);
            let tape = forward_record(&net, &batch.inputs).map_err(|e| diverged(&net, epoch, e))?;
            let out = readout_and_loss(&tape, &batch.labels)?;
            if !out.loss.is_finite() {
                let culprit = first_non_finite(&net).unwrap_or_else(|| "loss".into());
                return Err(Error::Divergence(format!(
                    "epoch {epoch}: non-finite value in {culprit}"
                )));
            }
            loss_sum += out.loss * chunk.len() as f64;
            correct += out
                .predictions
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            let grads = backward_threaded(&tape, &out.grad, &net, cfg.threads).map_err(|e| diverged(&net, epoch, e))?;
            adam.step(&mut net, &grads);
            if let Some(culprit) = first_non_finite(&net) {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}: non-finite value in {culprit}"
                )));
            }
        }

        let test = evaluate(&net, test_set, cfg.batch_size).map_err(|e| diverged(&net, epoch, e))?;
        epochs.push(EpochMetrics {
            epoch,
            shuffle_seed,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            test_loss: test.loss,
            test_accuracy: test.accuracy,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }

    let test_spike_counts = evaluate(&net, test_set, cfg.batch_size)?.spike_counts;
    let model = {
        let mut m: Vec<&str> = net.layers.iter().map(|l| l.model().as_str()).collect();
        m.dedup();
        m.join("+")
    };
    Ok((
        net,
        RunMetrics {
            model,
            epochs,
            test_spike_counts,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_poisson_patterns, PoissonConfig};
    use crate::network::{init_network, NetworkSpec};
    use crate::neuron::NeuronModel;

    fn setup(model: NeuronModel) -> (Network, Dataset, Dataset) {
        let ds = gen_poisson_patterns(&PoissonConfig {
            class_count: 2,
            neurons: 12,
            timesteps: 5,
            rate_lo: 0.0,
            rate_hi: 0.8,
            n_per_class: 12,
            seed: 2,
        })
        .unwrap();
        let (tr, te) = ds.split(0.25, 2).unwrap();
        let net = init_network(&NetworkSpec::uniform(12, &[8, 2], model, 5), 4).unwrap();
        (net, tr, te)
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let spec = NetworkSpec::uniform(1, &[1], NeuronModel::Lif, 1);
        let mut net = init_network(&spec, 0).unwrap();
        let before = net.layers[0].w.data()[0];
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(&net, &cfg);
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].dw.data_mut()[0] = 1.0;
        adam.step(&mut net, &g);
        let step = before - net.layers[0].w.data()[0];
        // m_hat = 1, v_hat = 1 => lr / (1 + eps)
        assert!((step - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15, "{step}");
    }

    #[test]
    fn zero_learning_rate_is_a_fixpoint() {
        for model in NeuronModel::ALL {
            let (net, tr, te) = setup(model);
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 4,
                learning_rate: 0.0,
                ..TrainConfig::default()
            };
            let (trained, _) = train(&net, &tr, &te, &cfg).unwrap();
            for (a, b) in trained.params().iter().zip(net.params()) {
                assert!(a.values.iter().zip(b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let (net, tr, te) = setup(NeuronModel::CachedAia);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let (a, ma) = train(&net, &tr, &te, &cfg).unwrap();
        let (b, mb) = train(
            &net,
            &tr,
            &te,
            &TrainConfig {
                threads: 3,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(ma.to_csv(), mb.to_csv());
        assert_eq!(ma.epochs[1].shuffle_seed, mb.epochs[1].shuffle_seed);
    }

    #[test]
    fn rejects_mismatched_dataset() {
        let (_, tr, te) = setup(NeuronModel::Lif);
        let net = init_network(&NetworkSpec::uniform(5, &[2], NeuronModel::Lif, 5), 0).unwrap();
        assert!(matches!(
            train(&net, &tr, &te, &TrainConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn divergence_names_parameter() {
        let (mut net, tr, te) = setup(NeuronModel::Lif);
        net.layers[1].w.data_mut()[0] = f64::MAX;
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: f64::MAX,
            ..TrainConfig::default()
        };
        match train(&net, &tr, &te, &cfg) {
            Err(Error::Divergence(msg)) => assert!(msg.contains("layer"), "{msg}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn metrics_csv_layout() {
        let (net, tr, te) = setup(NeuronModel::Lif);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (_, m) = train(&net, &tr, &te, &cfg).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,split,loss,accuracy");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,train,"));
        assert!(m.epochs.iter().all(|e| (0.0..=1.0).contains(&e.test_accuracy)));
    }
}
