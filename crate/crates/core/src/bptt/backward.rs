//! Reverse pass over a recorded tape.
//!
//! For each layer, `delta[t] = dL/du[t]` is built backwards in time:
//!
//! ```text
//! g_o[t]   = dL/do[t] from the next layer (or the readout)
//! delta[t] = g_o[t] * spike'(u[t]) + delta[t+1] * leak * (1 - o[t])
//! ```
//!
//! In hard mode the reset factor `(1 - o[t])` is a constant. In smoothed mode
//! the forward pass is differentiable end to end, so the reset path adds
//! `-delta[t+1] * leak * u[t]` to `g_o[t]`.
//!
//! Weight gradients are then formed per model:
//!
//! | model      | dW_ij per (t, sample)       | extra                         |
//! |------------|-----------------------------|-------------------------------|
//! | LIF/IF     | `delta_i * o_j`             |                               |
//! | PLIF       | `delta_i * o_j`             | leak term via `u[t-1]`        |
//! | AIA        | `x_i * delta_i * o_j`       |                               |
//! | cached AIA | `beta_i * delta_i * o_j`    | `dbeta_i += delta_i * x_i`    |
//!
//! The AIA factor `x_i` touches only the local weight update; the spatial
//! signal sent to the previous layer is `W^T delta` as for LIF. Cached AIA has
//! `beta` in its forward drive, so its spatial signal is `W^T (beta * delta)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::neuron::{NeuronModel, SpikeMode};
use crate::numerics::{logistic, DenseArray};

use super::tape::BpttTape;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub dw: DenseArray,
    pub dbeta: Option<Vec<f64>>,
    pub dplif_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    dw: DenseArray::zeros(l.w.shape().to_vec()),
                    dbeta: l.beta.as_ref().map(|b| vec![0.0; b.beta.len()]),
                    dplif_raw: (l.model() == NeuronModel::Plif).then_some(0.0),
                })
                .collect(),
        }
    }

    /// Named tensors in the same order as [`Network::params`].
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (n, g) in self.layers.iter().enumerate() {
            out.push((format!("layer{n}.w"), g.dw.data()));
            if let Some(b) = &g.dbeta {
                out.push((format!("layer{n}.beta"), b.as_slice()));
            }
            if let Some(p) = &g.dplif_raw {
                out.push((format!("layer{n}.plif_raw"), std::slice::from_ref(p)));
            }
        }
        out
    }

    pub fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.dw.data_mut().iter_mut().zip(b.dw.data()) {
                *x += y;
            }
            if let (Some(x), Some(y)) = (&mut a.dbeta, &b.dbeta) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
            if let (Some(x), Some(y)) = (&mut a.dplif_raw, b.dplif_raw) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradients of the loss for every trainable tensor, summed over time and
/// over the batch. `upstream` is dL/d(readout), `batch × classes`.
pub fn backward(tape: &BpttTape, upstream: &DenseArray, net: &Network) -> Result<GradientSet> {
    backward_threaded(tape, upstream, net, 1)
}

/// As [`backward`], computing samples on up to `threads` workers. Samples are
/// always reduced in index order, so the result does not depend on `threads`.
pub fn backward_threaded(tape: &BpttTape, upstream: &DenseArray, net: &Network, threads: usize) -> Result<GradientSet> {
    check_tape(tape, upstream, net)?;
    let per_sample: Vec<GradientSet> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..tape.batch)
                .into_par_iter()
                .map(|b| sample_backward(tape, upstream, net, b).0)
                .collect()
        })
    } else {
        (0..tape.batch)
            .map(|b| sample_backward(tape, upstream, net, b).0)
            .collect()
    };
    let mut total = GradientSet::zeros_like(net);
    for g in &per_sample {
        total.accumulate(g);
    }
    if !total.is_finite() {
        return Err(Error::Numeric("backward produced a non-finite gradient".into()));
    }
    Ok(total)
}

/// dL/du for every layer and timestep, indexed `[layer][t]`, each `batch × width`.
pub fn layer_deltas(tape: &BpttTape, upstream: &DenseArray, net: &Network) -> Result<Vec<Vec<DenseArray>>> {
    check_tape(tape, upstream, net)?;
    let mut out: Vec<Vec<DenseArray>> = net
        .layers
        .iter()
        .map(|l| vec![DenseArray::zeros(vec![tape.batch, l.out_width()]); tape.timesteps])
        .collect();
    for b in 0..tape.batch {
        let (_, deltas) = sample_backward(tape, upstream, net, b);
        for (n, per_t) in deltas.into_iter().enumerate() {
            for (t, d) in per_t.into_iter().enumerate() {
                out[n][t].row_mut(b).copy_from_slice(&d);
            }
        }
    }
    Ok(out)
}

fn check_tape(tape: &BpttTape, upstream: &DenseArray, net: &Network) -> Result<()> {
    if tape.layers.len() != net.layers.len() || tape.input.len() != tape.timesteps {
        return Err(Error::State(format!(
            "tape holds {} layers for a {}-layer network",
            tape.layers.len(),
            net.layers.len()
        )));
    }
    for (n, (steps, layer)) in tape.layers.iter().zip(&net.layers).enumerate() {
        if steps.len() != tape.timesteps {
            return Err(Error::State(format!(
                "layer {n} recorded {} of {} timesteps",
                steps.len(),
                tape.timesteps
            )));
        }
        if steps.iter().any(|s| s.u.shape() != [tape.batch, layer.out_width()]) {
            return Err(Error::State(format!("layer {n} tape width disagrees with network")));
        }
    }
    if upstream.shape() != [tape.batch, net.class_count()] {
        return Err(Error::Dimension(format!(
            "upstream gradient {:?}, expected [{}, {}]",
            upstream.shape(),
            tape.batch,
            net.class_count()
        )));
    }
    Ok(())
}

fn sample_backward(
    tape: &BpttTape,
    upstream: &DenseArray,
    net: &Network,
    b: usize,
) -> (GradientSet, Vec<Vec<Vec<f64>>>) {
    let steps = tape.timesteps;
    let mut grads = GradientSet::zeros_like(net);
    let mut deltas: Vec<Vec<Vec<f64>>> = vec![Vec::new(); net.layers.len()];

    // dL/do for the current layer, per timestep
    let readout_grad = upstream.row(b);
    let mut g_out: Vec<Vec<f64>> = (0..steps)
        .map(|_| readout_grad.iter().map(|g| g / steps as f64).collect())
        .collect();

    for n in (0..net.layers.len()).rev() {
        let layer = &net.layers[n];
        let (layer_deltas, g_in) = layer_backward(tape, layer, n, b, &g_out, &mut grads.layers[n]);
        deltas[n] = layer_deltas;
        g_out = g_in;
    }
    (grads, deltas)
}

/// Reverse-time sweep of one layer for sample `b`. Returns dL/du per timestep
/// and dL/d(presynaptic spikes) per timestep.
fn layer_backward(
    tape: &BpttTape,
    layer: &Layer,
    n: usize,
    b: usize,
    g_out: &[Vec<f64>],
    grad: &mut LayerGradient,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let steps = tape.timesteps;
    let width = layer.out_width();
    let in_width = layer.in_width();
    let params = &layer.neuron;
    let leak = params.leak();
    let model = params.model;
    let beta = layer.beta.as_ref().map(|c| c.beta.as_slice());
    let smoothed = tape.mode == SpikeMode::Smoothed;

    let mut deltas = vec![vec![0.0; width]; steps];
    let mut g_in = vec![vec![0.0; in_width]; steps];
    let mut leak_grad = 0.0;
    let mut coeff = vec![0.0; width];

    for t in (0..steps).rev() {
        let rec = &tape.layers[n][t];
        let u = rec.u.row(b);
        let o = rec.o.row(b);
        let x = rec.x.row(b);
        let pre = tape.presynaptic(n, t).row(b);
        let next = (t + 1 < steps).then(|| deltas[t + 1].clone());

        for i in 0..width {
            let mut g_o = g_out[t][i];
            let mut carry = 0.0;
            if let Some(next) = &next {
                if smoothed {
                    g_o -= next[i] * leak * u[i];
                }
                carry = next[i] * leak * (1.0 - o[i]);
            }
            deltas[t][i] = g_o * params.spike_derivative(u[i], tape.mode) + carry;
        }
        let delta = &deltas[t];

        // leak gradient: u[t] = leak * u[t-1] * (1 - o[t-1]) + drive[t]
        if model == NeuronModel::Plif && t > 0 {
            let prev = &tape.layers[n][t - 1];
            let (pu, po) = (prev.u.row(b), prev.o.row(b));
            for i in 0..width {
                leak_grad += delta[i] * pu[i] * (1.0 - po[i]);
            }
        }

        for i in 0..width {
            let local = match model {
                NeuronModel::Aia => x[i] * delta[i],
                NeuronModel::CachedAia => beta.map_or(1.0, |bv| bv[i]) * delta[i],
                _ => delta[i],
            };
            if local != 0.0 {
                for (dw, &p) in grad.dw.row_mut(i).iter_mut().zip(pre) {
                    *dw += local * p;
                }
            }
            coeff[i] = match beta {
                Some(bv) => bv[i] * delta[i],
                None => delta[i],
            };
        }
        if let Some(db) = &mut grad.dbeta {
            for i in 0..width {
                db[i] += delta[i] * x[i];
            }
        }

        let gi = &mut g_in[t];
        for (i, &c) in coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (g, &w) in gi.iter_mut().zip(layer.w.row(i)) {
                *g += w * c;
            }
        }
    }

    if let Some(dp) = &mut grad.dplif_raw {
        let s = logistic(params.plif_raw);
        *dp += leak_grad * s * (1.0 - s);
    }
    (deltas, g_in)
}
