//! JSON network checkpoints.
//!
//! Every `f64` is stored as its 16-digit hex bit pattern so a save/load
//! round trip is exact.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::network::{Layer, Network, NetworkSpec};
use crate::neuron::{CacheBeta, NeuronModel, NeuronParams};
use crate::numerics::DenseArray;

pub const CHECKPOINT_FORMAT: &str = "aia-snn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexF64(pub f64);

impl Serialize for HexF64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", self.0.to_bits()))
    }
}

impl<'de> Deserialize<'de> for HexF64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom(format!("expected 16 hex digits, got `{s}`")));
        }
        u64::from_str_radix(&s, 16)
            .map(|bits| HexF64(f64::from_bits(bits)))
            .map_err(serde::de::Error::custom)
    }
}

fn hex(values: &[f64]) -> Vec<HexF64> {
    values.iter().copied().map(HexF64).collect()
}

fn unhex(values: &[HexF64]) -> Vec<f64> {
    values.iter().map(|h| h.0).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    model: NeuronModel,
    shape: [usize; 2],
    w: Vec<HexF64>,
    beta: Option<Vec<HexF64>>,
    v_th: HexF64,
    lambda: HexF64,
    plif_raw: HexF64,
    surrogate_width: HexF64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    spec: NetworkSpec,
    seed: u64,
    layers: Vec<LayerRecord>,
}

pub fn to_json(net: &Network) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        spec: net.spec.clone(),
        seed: net.seed,
        layers: net
            .layers
            .iter()
            .map(|l| LayerRecord {
                model: l.model(),
                shape: [l.out_width(), l.in_width()],
                w: hex(l.w.data()),
                beta: l.beta.as_ref().map(|b| hex(&b.beta)),
                v_th: HexF64(l.neuron.v_th),
                lambda: HexF64(l.neuron.lambda),
                plif_raw: HexF64(l.neuron.plif_raw),
                surrogate_width: HexF64(l.neuron.surrogate_width),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json(text: &str) -> Result<Network> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|r| {
            Ok(Layer {
                w: DenseArray::new(r.shape.to_vec(), unhex(&r.w))?,
                neuron: NeuronParams {
                    v_th: r.v_th.0,
                    lambda: r.lambda.0,
                    model: r.model,
                    plif_raw: r.plif_raw.0,
                    surrogate_width: r.surrogate_width.0,
                },
                beta: r.beta.map(|b| CacheBeta { beta: unhex(&b) }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network {
        spec: file.spec,
        seed: file.seed,
        layers,
    };
    net.validate()?;
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
