//! Single-timestep neuron dynamics.
//!
//! All models share the hard-reset recurrence
//!
//! ```text
//! u' = leak * u * (1 - o) + drive
//! o' = H(u' - v_th)
//! ```
//!
//! and differ in the leak (`IF` has none, `PLIF` learns it) and in the drive:
//! `x` for LIF/IF/PLIF/AIA, `beta * x` for cached AIA. AIA's forward pass is
//! identical to LIF; it only changes how weight gradients are formed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{heaviside_ge, logistic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronModel {
    Lif,
    If,
    Plif,
    Aia,
    CachedAia,
}

impl NeuronModel {
    pub const ALL: [NeuronModel; 5] = [
        NeuronModel::Lif,
        NeuronModel::If,
        NeuronModel::Plif,
        NeuronModel::Aia,
        NeuronModel::CachedAia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NeuronModel::Lif => "lif",
            NeuronModel::If => "if",
            NeuronModel::Plif => "plif",
            NeuronModel::Aia => "aia",
            NeuronModel::CachedAia => "cached-aia",
        }
    }

    pub fn has_beta(self) -> bool {
        self == NeuronModel::CachedAia
    }
}

impl fmt::Display for NeuronModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NeuronModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NeuronModel::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown neuron model `{s}`")))
    }
}

/// How the spike nonlinearity is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeMode {
    /// Heaviside forward, rectangular surrogate backward.
    #[default]
    Hard,
    /// `logistic((u - v_th) / a)` forward with its exact derivative backward.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub v_th: f64,
    pub lambda: f64,
    pub model: NeuronModel,
    /// Unconstrained PLIF leak parameter; the leak is `logistic(plif_raw)`.
    pub plif_raw: f64,
    pub surrogate_width: f64,
}

impl NeuronParams {
    pub fn new(model: NeuronModel) -> Self {
        Self {
            v_th: 1.0,
            lambda: if model == NeuronModel::If { 1.0 } else { 0.5 },
            model,
            plif_raw: 0.0,
            surrogate_width: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::Config(format!("v_th must be positive, got {}", self.v_th)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.surrogate_width > 0.0 && self.surrogate_width.is_finite()) {
            return Err(Error::Config(format!(
                "surrogate width must be positive, got {}",
                self.surrogate_width
            )));
        }
        if self.model == NeuronModel::If && self.lambda != 1.0 {
            return Err(Error::Config("IF neurons require lambda == 1".into()));
        }
        if !self.plif_raw.is_finite() {
            return Err(Error::Config("plif_raw must be finite".into()));
        }
        Ok(())
    }

    /// Leak factor applied to the carried potential.
    pub fn leak(&self) -> f64 {
        match self.model {
            NeuronModel::If => 1.0,
            NeuronModel::Plif => logistic(self.plif_raw),
            _ => self.lambda,
        }
    }

    /// Spike output for potential `u`.
    #[inline]
    pub fn fire(&self, u: f64, mode: SpikeMode) -> f64 {
        match mode {
            SpikeMode::Hard => heaviside_ge(u, self.v_th),
            SpikeMode::Smoothed => logistic((u - self.v_th) / self.surrogate_width),
        }
    }

    /// d(spike)/du used by the backward pass.
    #[inline]
    pub fn spike_derivative(&self, u: f64, mode: SpikeMode) -> f64 {
        match mode {
            SpikeMode::Hard => rectangular_surrogate(u, self.v_th, self.surrogate_width),
            SpikeMode::Smoothed => {
                let s = logistic((u - self.v_th) / self.surrogate_width);
                s * (1.0 - s) / self.surrogate_width
            }
        }
    }
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self::new(NeuronModel::Lif)
    }
}

#[inline]
fn rectangular_surrogate(u: f64, v_th: f64, width: f64) -> f64 {
    if (u - v_th).abs() <= width / 2.0 {
        1.0 / width
    } else {
        0.0
    }
}

/// Membrane potential and last spike for a group of neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub u: Vec<f64>,
    pub o: Vec<f64>,
}

impl NeuronState {
    pub fn resting(neurons: usize) -> Self {
        Self {
            u: vec![0.0; neurons],
            o: vec![0.0; neurons],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Per-neuron cache scalar of the cached AIA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheBeta {
    pub beta: Vec<f64>,
}

impl CacheBeta {
    pub fn ones(neurons: usize) -> Self {
        Self {
            beta: vec![1.0; neurons],
        }
    }
}

/// In-place hard-reset integration of `drive` into `state`.
pub(crate) fn integrate(
    state: &mut NeuronState,
    drive: impl Iterator<Item = f64>,
    leak: f64,
    params: &NeuronParams,
    mode: SpikeMode,
) {
    for ((u, o), d) in state.u.iter_mut().zip(state.o.iter_mut()).zip(drive) {
        *u = leak * *u * (1.0 - *o) + d;
        *o = params.fire(*u, mode);
    }
}

fn check_input(state: &NeuronState, x: &[f64]) -> Result<()> {
    if x.len() != state.len() || state.o.len() != state.u.len() {
        return Err(Error::Dimension(format!(
            "input of width {} for {} neurons",
            x.len(),
            state.len()
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("input {i} is {}", x[i])));
    }
    Ok(())
}

fn step_with_leak(state: &NeuronState, x: &[f64], leak: f64, p: &NeuronParams) -> Result<NeuronState> {
    check_input(state, x)?;
    let mut next = state.clone();
    integrate(&mut next, x.iter().copied(), leak, p, SpikeMode::Hard);
    Ok(next)
}

pub fn lif_step(state: &NeuronState, x: &[f64], p: &NeuronParams) -> Result<NeuronState> {
    step_with_leak(state, x, p.lambda, p)
}

pub fn if_step(state: &NeuronState, x: &[f64], p: &NeuronParams) -> Result<NeuronState> {
    step_with_leak(state, x, 1.0, p)
}

pub fn plif_step(state: &NeuronState, x: &[f64], p: &NeuronParams) -> Result<NeuronState> {
    step_with_leak(state, x, logistic(p.plif_raw), p)
}

/// AIA forward: `f(x) = x`, so the update coincides with LIF.
pub fn aia_step(state: &NeuronState, x: &[f64], p: &NeuronParams) -> Result<NeuronState> {
    step_with_leak(state, x, p.lambda, p)
}

pub fn cached_aia_step(state: &NeuronState, x: &[f64], p: &NeuronParams, beta: &CacheBeta) -> Result<NeuronState> {
    check_input(state, x)?;
    if beta.beta.len() != state.len() {
        return Err(Error::Dimension(format!(
            "beta of length {} for {} neurons",
            beta.beta.len(),
            state.len()
        )));
    }
    let mut next = state.clone();
    let drive = x.iter().zip(&beta.beta).map(|(&x, &b)| b * x);
    integrate(&mut next, drive, p.lambda, p, SpikeMode::Hard);
    Ok(next)
}

/// Rectangular surrogate: `1/a` inside `|u - v_th| <= a/2`, zero outside.
pub fn surrogate_spike_derivative(u: &[f64], p: &NeuronParams) -> Vec<f64> {
    u.iter()
        .map(|&u| rectangular_surrogate(u, p.v_th, p.surrogate_width))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(u: f64, o: f64) -> NeuronState {
        NeuronState { u: vec![u], o: vec![o] }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn lif_examples() {
        let p = NeuronParams::new(NeuronModel::Lif);
        let s = lif_step(&state(0.8, 0.0), &[0.4], &p).unwrap();
        assert!(close(s.u[0], 0.8) && s.o[0] == 0.0);
        let s = lif_step(&state(0.8, 0.0), &[0.7], &p).unwrap();
        assert!(close(s.u[0], 1.1) && s.o[0] == 1.0);
        let s = lif_step(&state(1.1, 1.0), &[0.0], &p).unwrap();
        assert_eq!((s.u[0], s.o[0]), (0.0, 0.0));
    }

    #[test]
    fn if_examples() {
        let p = NeuronParams::new(NeuronModel::If);
        let s = if_step(&state(0.5, 0.0), &[0.3], &p).unwrap();
        assert!(close(s.u[0], 0.8) && s.o[0] == 0.0);
        let s = if_step(&state(0.5, 0.0), &[0.5], &p).unwrap();
        assert_eq!((s.u[0], s.o[0]), (1.0, 1.0));
        let s = if_step(&state(0.0, 0.0), &[0.0], &p).unwrap();
        assert_eq!((s.u[0], s.o[0]), (0.0, 0.0));
    }

    #[test]
    fn plif_examples() {
        let mut p = NeuronParams::new(NeuronModel::Plif);
        let s = plif_step(&state(0.8, 0.0), &[0.4], &p).unwrap();
        assert!(close(s.u[0], 0.8) && s.o[0] == 0.0);

        p.plif_raw = 60.0;
        let ifp = NeuronParams::new(NeuronModel::If);
        let a = plif_step(&state(0.5, 0.0), &[0.3], &p).unwrap();
        let b = if_step(&state(0.5, 0.0), &[0.3], &ifp).unwrap();
        assert!(close(a.u[0], b.u[0]));

        p.plif_raw = -60.0;
        let s = plif_step(&state(0.9, 0.0), &[0.25], &p).unwrap();
        assert!(close(s.u[0], 0.25));
    }

    #[test]
    fn aia_examples() {
        let p = NeuronParams::new(NeuronModel::Aia);
        let s = aia_step(&state(0.8, 0.0), &[0.7], &p).unwrap();
        assert!(close(s.u[0], 1.1) && s.o[0] == 1.0);
        let s = aia_step(&state(0.0, 0.0), &[0.0], &p).unwrap();
        assert_eq!((s.u[0], s.o[0]), (0.0, 0.0));
    }

    #[test]
    fn cached_aia_examples() {
        let p = NeuronParams::new(NeuronModel::CachedAia);
        let s = cached_aia_step(&state(0.0, 0.0), &[0.6], &p, &CacheBeta { beta: vec![2.0] }).unwrap();
        assert!(close(s.u[0], 1.2) && s.o[0] == 1.0);
        let s = cached_aia_step(&state(0.6, 0.0), &[5.0], &p, &CacheBeta { beta: vec![0.0] }).unwrap();
        assert_eq!(s.u[0], 0.3);
        assert!(matches!(
            cached_aia_step(&state(0.0, 0.0), &[0.6], &p, &CacheBeta::ones(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn step_rejects_bad_input() {
        let p = NeuronParams::default();
        assert!(matches!(
            lif_step(&state(0.0, 0.0), &[f64::NAN], &p),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            lif_step(&state(0.0, 0.0), &[1.0, 2.0], &p),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn surrogate_window() {
        let p = NeuronParams::default();
        assert_eq!(
            surrogate_spike_derivative(&[1.0, 0.4, 1.5, 0.5, 1.51], &p),
            vec![1.0, 0.0, 1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn surrogate_integrates_to_one() {
        for &a in &[0.25, 1.0, 3.0] {
            let p = NeuronParams {
                surrogate_width: a,
                ..NeuronParams::default()
            };
            let n = 200_000;
            let (lo, hi) = (p.v_th - 4.0 * a, p.v_th + 4.0 * a);
            let du = (hi - lo) / n as f64;
            let u: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) * du).collect();
            let total: f64 = surrogate_spike_derivative(&u, &p).iter().sum::<f64>() * du;
            assert!((total - 1.0).abs() < 1e-3, "a={a}: {total}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(NeuronParams::default().validate().is_ok());
        let mut p = NeuronParams::new(NeuronModel::If);
        p.lambda = 0.5;
        assert!(p.validate().is_err());
        let p = NeuronParams {
            lambda: 1.5,
            ..NeuronParams::default()
        };
        assert!(p.validate().is_err());
        let p = NeuronParams {
            v_th: 0.0,
            ..NeuronParams::default()
        };
        assert!(p.validate().is_err());
        assert_eq!("cached-aia".parse::<NeuronModel>().unwrap(), NeuronModel::CachedAia);
        assert!("lifx".parse::<NeuronModel>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn bits(s: &NeuronState) -> Vec<u64> {
            s.u.iter().chain(&s.o).map(|v| v.to_bits()).collect()
        }

        fn arb_state() -> impl Strategy<Value = (NeuronState, Vec<f64>)> {
            (1usize..8).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-2.0f64..2.0, n),
                    proptest::collection::vec(proptest::bool::ANY, n),
                    proptest::collection::vec(-2.0f64..2.0, n),
                )
                    .prop_map(|(u, o, x)| {
                        let o = o.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
                        (NeuronState { u, o }, x)
                    })
            })
        }

        proptest! {
            #[test]
            fn forward_equivalences((s, x) in arb_state()) {
                let lif = NeuronParams::new(NeuronModel::Lif);
                let base = lif_step(&s, &x, &lif).unwrap();
                let aia = aia_step(&s, &x, &NeuronParams::new(NeuronModel::Aia)).unwrap();
                prop_assert_eq!(bits(&base), bits(&aia));
                let cached = cached_aia_step(&s, &x, &NeuronParams::new(NeuronModel::CachedAia), &CacheBeta::ones(s.len())).unwrap();
                prop_assert_eq!(bits(&base), bits(&cached));
                let one = NeuronParams { lambda: 1.0, ..lif };
                let a = if_step(&s, &x, &NeuronParams::new(NeuronModel::If)).unwrap();
                let b = lif_step(&s, &x, &one).unwrap();
                prop_assert_eq!(bits(&a), bits(&b));
            }

            #[test]
            fn spikes_binary_and_reset((s, x) in arb_state()) {
                let p = NeuronParams::default();
                let next = lif_step(&s, &x, &p).unwrap();
                for i in 0..s.len() {
                    prop_assert!(next.o[i] == 0.0 || next.o[i] == 1.0);
                    if s.o[i] == 1.0 {
                        // carried term vanished, only the input remains
                        prop_assert_eq!(next.u[i].to_bits(), (0.0 + x[i]).to_bits());
                    }
                }
            }
        }
    }
}
