//! Central-difference verification of the analytic gradients.
//!
//! Runs in smoothed mode, where the network is differentiable, and compares
//! each analytic gradient tensor against a numerical one:
//!
//! * weights of non-AIA layers, `beta`, and `plif_raw` are perturbed directly;
//! * AIA weights have no forward counterpart (the association factor exists
//!   only in the update rule), so the oracle probes `dL/dx_i` per sample and
//!   timestep by nudging the weighted input and assembles
//!   `sum_{b,t} x_i * dL/dx_i * o_j` from those probes.

use std::fmt::{self, Write as _};

use crate::data::SpikeTensor;
use crate::error::Result;
use crate::network::{softmax_cross_entropy, Network};
use crate::neuron::{NeuronModel, SpikeMode};
use crate::numerics::DenseArray;

use super::backward::{backward, GradientSet};
use super::tape::{forward_with, BpttTape, InputNudge};

/// Denominator floor for relative errors, so entries that are zero up to
/// finite-difference noise do not dominate the report.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub label: String,
    pub tolerance: f64,
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> Option<&GradcheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.3e}\t{}",
                self.label,
                e.name,
                e.max_rel_error,
                if e.passed { "pass" } else { "FAIL" }
            );
        }
        f.write_str(&s)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn smoothed_loss(net: &Network, input: &SpikeTensor, labels: &[usize], nudge: Option<InputNudge>) -> Result<f64> {
    let tape = forward_with(net, input, SpikeMode::Smoothed, nudge)?;
    Ok(softmax_cross_entropy(&tape.readout, labels)?.loss)
}

/// Checks [`backward`] against finite differences.
pub fn gradcheck(
    net: &Network,
    input: &SpikeTensor,
    labels: &[usize],
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    gradcheck_with(net, input, labels, opts, backward)
}

/// Checks an arbitrary backward implementation against finite differences.
pub fn gradcheck_with<F>(
    net: &Network,
    input: &SpikeTensor,
    labels: &[usize],
    opts: GradcheckOptions,
    analytic_backward: F,
) -> Result<GradcheckReport>
where
    F: Fn(&BpttTape, &DenseArray, &Network) -> Result<GradientSet>,
{
    let tape = forward_with(net, input, SpikeMode::Smoothed, None)?;
    let loss = softmax_cross_entropy(&tape.readout, labels)?;
    let analytic = analytic_backward(&tape, &loss.grad, net)?;
    let numeric = numeric_gradients(net, input, labels, &tape, opts.step)?;

    let mut entries = Vec::new();
    for ((name, a), (_, n)) in analytic.tensors().into_iter().zip(numeric.tensors()) {
        let mut worst = (0.0, 0usize);
        for (k, (&x, &y)) in a.iter().zip(n).enumerate() {
            let err = relative_error(x, y);
            if err > worst.0 || err.is_nan() {
                worst = (err, k);
            }
        }
        let (max_rel_error, worst_index) = worst;
        entries.push(GradcheckEntry {
            name,
            max_rel_error,
            worst_index,
            analytic: a.get(worst_index).copied().unwrap_or(0.0),
            numeric: n.get(worst_index).copied().unwrap_or(0.0),
            passed: max_rel_error <= opts.tolerance,
        });
    }
    Ok(GradcheckReport {
        label: model_label(net),
        tolerance: opts.tolerance,
        entries,
    })
}

fn model_label(net: &Network) -> String {
    let mut models: Vec<&str> = net.layers.iter().map(|l| l.model().as_str()).collect();
    models.dedup();
    models.join("+")
}

/// Numerical counterpart of every gradient tensor, laid out like [`GradientSet`].
pub fn numeric_gradients(
    net: &Network,
    input: &SpikeTensor,
    labels: &[usize],
    base_tape: &BpttTape,
    step: f64,
) -> Result<GradientSet> {
    let mut out = GradientSet::zeros_like(net);

    // direct perturbation of every parameter
    let mut probe = net.clone();
    let tensor_count = probe.params_mut().len();
    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(tensor_count);
    for p in 0..tensor_count {
        let len = probe.params_mut()[p].values.len();
        let mut grads = vec![0.0; len];
        for (k, g) in grads.iter_mut().enumerate() {
            let orig = probe.params_mut()[p].values[k];
            probe.params_mut()[p].values[k] = orig + step;
            let plus = smoothed_loss(&probe, input, labels, None)?;
            probe.params_mut()[p].values[k] = orig - step;
            let minus = smoothed_loss(&probe, input, labels, None)?;
            probe.params_mut()[p].values[k] = orig;
            *g = (plus - minus) / (2.0 * step);
        }
        numeric.push(grads);
    }

    let mut flat = numeric.into_iter();
    for layer in out.layers.iter_mut() {
        layer.dw.data_mut().copy_from_slice(&flat.next().expect("weights"));
        if let Some(db) = &mut layer.dbeta {
            db.copy_from_slice(&flat.next().expect("beta"));
        }
        if let Some(dp) = &mut layer.dplif_raw {
            *dp = flat.next().expect("plif_raw")[0];
        }
    }

    // AIA layers: assemble the association update from probed dL/dx
    for (n, layer) in net.layers.iter().enumerate() {
        if layer.model() != NeuronModel::Aia {
            continue;
        }
        let dw = &mut out.layers[n].dw;
        dw.data_mut().fill(0.0);
        for t in 0..base_tape.timesteps {
            let x = &base_tape.layers[n][t].x;
            let pre = base_tape.presynaptic(n, t);
            for b in 0..base_tape.batch {
                for i in 0..layer.out_width() {
                    let mut nudge = InputNudge {
                        layer: n,
                        t,
                        sample: b,
                        neuron: i,
                        delta: step,
                    };
                    let plus = smoothed_loss(net, input, labels, Some(nudge))?;
                    nudge.delta = -step;
                    let minus = smoothed_loss(net, input, labels, Some(nudge))?;
                    let dl_dx = (plus - minus) / (2.0 * step);
                    let factor = x.get2(b, i) * dl_dx;
                    for (g, &o) in dw.row_mut(i).iter_mut().zip(pre.row(b)) {
                        *g += factor * o;
                    }
                }
            }
        }
    }
    Ok(out)
}
