//! Spike-count and weight-distribution diagnostics for comparing two models.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::numerics::histogram;
use crate::train::evaluate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeCountReport {
    /// Total spikes per layer over the evaluation set.
    pub per_layer: Vec<u64>,
    /// `samples * width * T` per layer, the most spikes a layer can emit.
    pub bound: Vec<u64>,
}

pub fn spike_count_report(net: &Network, data: &Dataset) -> Result<SpikeCountReport> {
    if data.is_empty() {
        return Ok(SpikeCountReport {
            per_layer: vec![0; net.layers.len()],
            bound: vec![0; net.layers.len()],
        });
    }
    let eval = evaluate(net, data, 64)?;
    let bound = net
        .layers
        .iter()
        .map(|l| (data.len() * l.out_width() * net.timesteps()) as u64)
        .collect();
    Ok(SpikeCountReport {
        per_layer: eval.spike_counts,
        bound,
    })
}

/// `layer,count_a,count_b,delta,bound` for two models on the same data.
pub fn spike_comparison_csv(a: &SpikeCountReport, b: &SpikeCountReport) -> Result<String> {
    if a.per_layer.len() != b.per_layer.len() {
        return Err(Error::Dimension(format!(
            "{} vs {} layers",
            a.per_layer.len(),
            b.per_layer.len()
        )));
    }
    let mut s = String::from("layer,count_a,count_b,delta,bound\n");
    for (n, ((&ca, &cb), &bound)) in a.per_layer.iter().zip(&b.per_layer).zip(&a.bound).enumerate() {
        let _ = writeln!(s, "{n},{ca},{cb},{},{bound}", cb as i64 - ca as i64);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightShiftBin {
    pub lo: f64,
    pub hi: f64,
    pub count_a: u64,
    pub count_b: u64,
    /// `(count_b - count_a) / total_weights`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightShiftReport {
    pub total_weights: usize,
    pub bins: Vec<WeightShiftBin>,
}

impl WeightShiftReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count_a,count_b,delta\n");
        for b in &self.bins {
            let _ = writeln!(s, "{},{},{},{},{}", b.lo, b.hi, b.count_a, b.count_b, b.delta);
        }
        s
    }
}

fn all_weights(net: &Network) -> Vec<f64> {
    net.layers.iter().flat_map(|l| l.w.data().iter().copied()).collect()
}

/// Symmetric edges covering every weight of both networks, with an odd
/// number of bins so one bin is centred on zero.
pub fn default_bin_edges(a: &Network, b: &Network, bins: usize) -> Vec<f64> {
    let bins = if bins.is_multiple_of(2) { bins + 1 } else { bins };
    let max = all_weights(a)
        .into_iter()
        .chain(all_weights(b))
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let half = if max > 0.0 { max * (1.0 + 1e-9) } else { 1.0 };
    (0..=bins)
        .map(|k| -half + 2.0 * half * k as f64 / bins as f64)
        .collect()
}

/// Normalized change in the weight histogram from `net_a` to `net_b`.
pub fn weight_shift_report(net_a: &Network, net_b: &Network, bin_edges: &[f64]) -> Result<WeightShiftReport> {
    let shapes = |n: &Network| n.layers.iter().map(|l| l.w.shape().to_vec()).collect::<Vec<_>>();
    if shapes(net_a) != shapes(net_b) {
        return Err(Error::Dimension(format!(
            "weight shapes differ: {:?} vs {:?}",
            shapes(net_a),
            shapes(net_b)
        )));
    }
    let (wa, wb) = (all_weights(net_a), all_weights(net_b));
    let total = wa.len();
    let (ha, hb) = (histogram(&wa, bin_edges)?, histogram(&wb, bin_edges)?);
    let bins = bin_edges
        .windows(2)
        .zip(ha.iter().zip(&hb))
        .map(|(e, (&ca, &cb))| WeightShiftBin {
            lo: e[0],
            hi: e[1],
            count_a: ca,
            count_b: cb,
            delta: (cb as f64 - ca as f64) / total as f64,
        })
        .collect();
    Ok(WeightShiftReport {
        total_weights: total,
        bins,
    })
}
