//! Closed-form weight-update rules for one postsynaptic neuron at one timestep.
//!
//! These mirror the engine's accumulation term by term but are written
//! directly from the update formulas, so they double as cross-checks.
//! `pre` holds presynaptic spikes `o_k`, `w_row` the weights `w_ik`, and
//! `du` the loss gradient `dL/du_i`.

/// LIF update: `dW_ij = dL/du_i * o_j`.
pub fn lif_update(du: f64, pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&o| du * o).collect()
}

/// AIA update in weighted-input form: `dW_ij = (sum_k w_ik o_k) * dL/du_i * o_j`.
pub fn aia_update_weighted_input(w_row: &[f64], pre: &[f64], du: f64) -> Vec<f64> {
    let x: f64 = w_row.iter().zip(pre).map(|(w, o)| w * o).sum();
    pre.iter().map(|&o| x * du * o).collect()
}

/// AIA update in spike-gated form: `dW_ij = o_j * sum_k o_k w_ik dW_ik^LIF`,
/// built from the LIF updates of the same neuron.
pub fn aia_update_gated(w_row: &[f64], pre: &[f64], lif_row: &[f64]) -> Vec<f64> {
    let assoc: f64 = pre.iter().zip(w_row).zip(lif_row).map(|((o, w), g)| o * w * g).sum();
    pre.iter().map(|&o| o * assoc).collect()
}

/// Cached AIA weight update: `dW_ij = o_j * beta_i * dW_ij^LIF`.
pub fn cached_aia_update(beta: f64, pre: &[f64], lif_row: &[f64]) -> Vec<f64> {
    pre.iter().zip(lif_row).map(|(&o, &g)| o * beta * g).collect()
}

/// Cache gradient: `dL/dbeta_i = sum_k o_k w_ik dW_ik^LIF`.
pub fn cached_aia_beta_grad(w_row: &[f64], pre: &[f64], lif_row: &[f64]) -> f64 {
    pre.iter().zip(w_row).zip(lif_row).map(|((o, w), g)| o * w * g).sum()
}
