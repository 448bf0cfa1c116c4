use crate::data::SpikeTensor;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::neuron::{integrate, NeuronState, SpikeMode};
use crate::numerics::DenseArray;

/// One layer at one timestep, each field `batch × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStep {
    /// Weighted input `W o_pre`.
    pub x: DenseArray,
    /// Membrane potential after integration (pre-reset).
    pub u: DenseArray,
    pub o: DenseArray,
}

/// Everything the backward pass needs from one forward run.
#[derive(Debug, Clone, PartialEq)]
pub struct BpttTape {
    pub mode: SpikeMode,
    pub batch: usize,
    pub timesteps: usize,
    /// Input spikes per timestep, `batch × input_width`.
    pub input: Vec<DenseArray>,
    /// Indexed `[layer][t]`.
    pub layers: Vec<Vec<LayerStep>>,
    /// Output-layer firing rate per class, `batch × classes`.
    pub readout: DenseArray,
}

impl BpttTape {
    /// Presynaptic activity feeding `layer` at timestep `t`.
    pub fn presynaptic(&self, layer: usize, t: usize) -> &DenseArray {
        if layer == 0 {
            &self.input[t]
        } else {
            &self.layers[layer - 1][t].o
        }
    }

    /// Total spikes emitted by each layer across batch and time.
    pub fn spike_counts(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|steps| steps.iter().map(|s| s.o.data().iter().sum::<f64>()).sum())
            .collect()
    }
}

/// Additive nudge to one weighted input `x[layer][t][sample, neuron]`, used by
/// finite-difference probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNudge {
    pub layer: usize,
    pub t: usize,
    pub sample: usize,
    pub neuron: usize,
    pub delta: f64,
}

/// Runs the network for `T` steps from rest (`u = 0, o = 0`) with hard spikes.
pub fn forward_record(net: &Network, input: &SpikeTensor) -> Result<BpttTape> {
    forward_with(net, input, SpikeMode::Hard, None)
}

pub fn forward_with(
    net: &Network,
    input: &SpikeTensor,
    mode: SpikeMode,
    nudge: Option<InputNudge>,
) -> Result<BpttTape> {
    if input.neurons() != net.input_width() {
        return Err(Error::Dimension(format!(
            "input width {} for a network expecting {}",
            input.neurons(),
            net.input_width()
        )));
    }
    if input.timesteps() != net.timesteps() {
        return Err(Error::Dimension(format!(
            "input has {} timesteps, network runs {}",
            input.timesteps(),
            net.timesteps()
        )));
    }
    let batch = input.batch();
    let timesteps = net.timesteps();
    let transposed: Vec<DenseArray> = net.layers.iter().map(|l| l.w.transpose()).collect::<Result<_>>()?;
    let mut states: Vec<NeuronState> = net
        .layers
        .iter()
        .map(|l| NeuronState::resting(batch * l.out_width()))
        .collect();
    let mut frames = Vec::with_capacity(timesteps);
    let mut layers: Vec<Vec<LayerStep>> = vec![Vec::with_capacity(timesteps); net.layers.len()];

    for t in 0..timesteps {
        let frame = input.frame(t);
        let mut pre = frame.clone();
        frames.push(frame);
        for (n, layer) in net.layers.iter().enumerate() {
            let mut x = pre.matmul(&transposed[n])?;
            if let Some(nudge) = nudge.filter(|g| g.layer == n && g.t == t) {
                x.row_mut(nudge.sample)[nudge.neuron] += nudge.delta;
            }
            let width = layer.out_width();
            let leak = layer.neuron.leak();
            let state = &mut states[n];
            match &layer.beta {
                Some(cache) => {
                    let drive = x.data().iter().enumerate().map(|(k, &v)| cache.beta[k % width] * v);
                    integrate(state, drive, leak, &layer.neuron, mode);
                }
                None => integrate(state, x.data().iter().copied(), leak, &layer.neuron, mode),
            }
            let u = DenseArray::new(vec![batch, width], state.u.clone())?;
            let o = DenseArray::new(vec![batch, width], state.o.clone())?;
            pre = o.clone();
            layers[n].push(LayerStep { x, u, o });
        }
    }

    let classes = net.class_count();
    let mut readout = DenseArray::zeros(vec![batch, classes]);
    if let Some(out_steps) = layers.last() {
        for step in out_steps {
            for (r, &o) in readout.data_mut().iter_mut().zip(step.o.data()) {
                *r += o;
            }
        }
    }
    let readout = readout.scale(1.0 / timesteps as f64)?;

    Ok(BpttTape {
        mode,
        batch,
        timesteps,
        input: frames,
        layers,
        readout,
    })
}
