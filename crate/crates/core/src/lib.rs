//! Spiking neural networks trained with backpropagation through time, with
//! LIF, IF, PLIF, adaptive internal association (AIA) and cached AIA neurons.
//!
//! AIA neurons integrate like LIF neurons but scale each weight update by
//! the neuron's weighted input, so synapses that are active together
//! strengthen or weaken each other. The cached variant moves that factor
//! into a per-neuron scalar `beta` that folds into the weights for inference
//! (see [`network::merge_beta`]).

pub mod analysis;
pub mod bptt;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod network;
pub mod neuron;
pub mod numerics;
pub mod train;

pub use bptt::{backward, forward_record, gradcheck, BpttTape, GradcheckOptions, GradcheckReport, GradientSet};
pub use data::{Dataset, SpikeTensor, Split};
pub use error::{Error, Result};
pub use network::{init_network, merge_beta, readout_and_loss, LayerSpec, Network, NetworkSpec};
pub use neuron::{NeuronModel, NeuronParams, NeuronState, SpikeMode};
pub use numerics::DenseArray;
pub use train::{train, RunMetrics, TrainConfig};
