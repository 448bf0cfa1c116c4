//! Feed-forward stacks of fully-connected spiking layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bptt::BpttTape;
use crate::error::{Error, Result};
use crate::neuron::{CacheBeta, NeuronModel, NeuronParams};
use crate::numerics::{argmax, DenseArray};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub model: NeuronModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    pub timesteps: usize,
}

impl NetworkSpec {
    /// Every layer uses `model`; the last width is the class count.
    pub fn uniform(input_width: usize, widths: &[usize], model: NeuronModel, timesteps: usize) -> Self {
        Self {
            input_width,
            layers: widths.iter().map(|&width| LayerSpec { width, model }).collect(),
            timesteps,
        }
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.input_width == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        if self.timesteps == 0 {
            return Err(Error::Config("timesteps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in` synaptic weights.
    pub w: DenseArray,
    pub neuron: NeuronParams,
    pub beta: Option<CacheBeta>,
}

impl Layer {
    pub fn in_width(&self) -> usize {
        self.w.cols()
    }

    pub fn out_width(&self) -> usize {
        self.w.rows()
    }

    pub fn model(&self) -> NeuronModel {
        self.neuron.model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

/// Kaiming-normal weights (`std = sqrt(2 / fan_in)`), `beta = 1`, `plif_raw = 0`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fan_in = spec.input_width;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for ls in &spec.layers {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive and finite");
        let data: Vec<f64> = (0..ls.width * fan_in).map(|_| normal.sample(&mut rng)).collect();
        layers.push(Layer {
            w: DenseArray::new(vec![ls.width, fan_in], data)?,
            neuron: NeuronParams::new(ls.model),
            beta: ls.model.has_beta().then(|| CacheBeta::ones(ls.width)),
        });
        fan_in = ls.width;
    }
    Ok(Network {
        spec: spec.clone(),
        seed,
        layers,
    })
}

/// Name and contents of one trainable tensor.
pub struct ParamView<'a> {
    pub name: String,
    pub values: &'a [f64],
}

pub struct ParamViewMut<'a> {
    pub name: String,
    pub values: &'a mut [f64],
}

impl Network {
    pub fn input_width(&self) -> usize {
        self.spec.input_width
    }

    pub fn timesteps(&self) -> usize {
        self.spec.timesteps
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_width)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.layers.len() {
            return Err(Error::Config("layer count disagrees with spec".into()));
        }
        let mut fan_in = self.spec.input_width;
        for (n, (layer, ls)) in self.layers.iter().zip(&self.spec.layers).enumerate() {
            if layer.w.shape() != [ls.width, fan_in] {
                return Err(Error::Dimension(format!(
                    "layer {n} weights {:?}, expected [{}, {fan_in}]",
                    layer.w.shape(),
                    ls.width
                )));
            }
            layer.neuron.validate()?;
            if layer.model().has_beta() != layer.beta.is_some() {
                return Err(Error::Config(format!("layer {n}: beta presence disagrees with model")));
            }
            if let Some(b) = &layer.beta {
                if b.beta.len() != ls.width {
                    return Err(Error::Dimension(format!("layer {n}: beta length {}", b.beta.len())));
                }
            }
            fan_in = ls.width;
        }
        Ok(())
    }

    /// Trainable tensors in a fixed order: per layer `w`, then `beta`, then `plif_raw`.
    pub fn params(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        for (n, layer) in self.layers.iter().enumerate() {
            out.push(ParamView {
                name: format!("layer{n}.w"),
                values: layer.w.data(),
            });
            if let Some(b) = &layer.beta {
                out.push(ParamView {
                    name: format!("layer{n}.beta"),
                    values: &b.beta,
                });
            }
            if layer.model() == NeuronModel::Plif {
                out.push(ParamView {
                    name: format!("layer{n}.plif_raw"),
                    values: std::slice::from_ref(&layer.neuron.plif_raw),
                });
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = Vec::new();
        for (n, layer) in self.layers.iter_mut().enumerate() {
            let is_plif = layer.model() == NeuronModel::Plif;
            out.push(ParamViewMut {
                name: format!("layer{n}.w"),
                values: layer.w.data_mut(),
            });
            if let Some(b) = &mut layer.beta {
                out.push(ParamViewMut {
                    name: format!("layer{n}.beta"),
                    values: &mut b.beta,
                });
            }
            if is_plif {
                out.push(ParamViewMut {
                    name: format!("layer{n}.plif_raw"),
                    values: std::slice::from_mut(&mut layer.neuron.plif_raw),
                });
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.values.len()).sum()
    }
}

/// Folds each cached-AIA layer's `beta` into its weight rows (`w'_ij = beta_i * w_ij`).
///
/// Folded layers become plain LIF layers without a cache vector, so the
/// result carries exactly the parameters of the equivalent LIF network.
pub fn merge_beta(net: &Network) -> Network {
    let mut merged = net.clone();
    for (layer, ls) in merged.layers.iter_mut().zip(merged.spec.layers.iter_mut()) {
        let Some(cache) = layer.beta.take() else {
            continue;
        };
        for (r, &b) in cache.beta.iter().enumerate() {
            for w in layer.w.row_mut(r) {
                *w *= b;
            }
        }
        layer.neuron.model = NeuronModel::Lif;
        ls.model = NeuronModel::Lif;
    }
    merged
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// dL/d(readout), `batch × classes`, already divided by the batch size.
    pub grad: DenseArray,
    pub predictions: Vec<usize>,
}

/// Softmax cross-entropy on the output firing rates recorded in `tape`.
pub fn readout_and_loss(tape: &BpttTape, labels: &[usize]) -> Result<LossOutput> {
    softmax_cross_entropy(&tape.readout, labels)
}

pub fn softmax_cross_entropy(readout: &DenseArray, labels: &[usize]) -> Result<LossOutput> {
    let (batch, classes) = (readout.rows(), readout.cols());
    if labels.len() != batch {
        return Err(Error::Dimension(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
    }
    let mut grad = DenseArray::zeros(vec![batch, classes]);
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch);
    for (b, &label) in labels.iter().enumerate() {
        let r = readout.row(b);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = r.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - r[label];
        let g = grad.row_mut(b);
        for (c, e) in exps.iter().enumerate() {
            g[c] = (e / z - if c == label { 1.0 } else { 0.0 }) / batch as f64;
        }
        predictions.push(argmax(r));
    }
    Ok(LossOutput {
        loss: loss / batch as f64,
        grad,
        predictions,
    })
}
