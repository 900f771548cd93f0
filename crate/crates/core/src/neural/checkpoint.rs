//! JSON model checkpoints.
//!
//! Floats are written in shortest round-trip form, so a save/load cycle
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, LossSpec, Network, TowerConfig, TrainConfig};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    /// Row-major `output × input`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerRecords {
    pub report: Vec<LayerRecord>,
    pub method: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub report_tower: TowerConfig,
    pub method_tower: TowerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub towers: TowerRecords,
    pub head: LayerRecord,
    pub config: CheckpointConfig,
}

impl LayerRecord {
    fn from_layer(layer: &DenseLayer) -> Self {
        Self {
            input: layer.input_dim(),
            output: layer.output_dim(),
            activation: layer.activation,
            weights: layer.weights.iter().copied().collect(),
            biases: layer.biases.to_vec(),
        }
    }

    fn to_layer(&self, what: &str) -> Result<DenseLayer> {
        if self.weights.len() != self.input * self.output {
            return Err(Error::dim(
                self.input * self.output,
                self.weights.len(),
                format!("{what} weights"),
            ));
        }
        if self.biases.len() != self.output {
            return Err(Error::dim(self.output, self.biases.len(), format!("{what} biases")));
        }
        let layer = DenseLayer {
            weights: Array2::from_shape_vec((self.output, self.input), self.weights.clone()).unwrap(),
            biases: Array1::from(self.biases.clone()),
            activation: self.activation,
        };
        Ok(layer)
    }
}

fn tower_from_records(records: &[LayerRecord], what: &str) -> Result<Vec<DenseLayer>> {
    if records.is_empty() {
        return Err(Error::Config(format!("{what} tower has no layers")));
    }
    let layers = records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_layer(&format!("{what} layer {i}")))
        .collect::<Result<Vec<_>>>()?;
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].output_dim() != pair[1].input_dim() {
            return Err(Error::dim(
                pair[0].output_dim(),
                pair[1].input_dim(),
                format!("{what} layer {} input", i + 1),
            ));
        }
    }
    Ok(layers)
}

impl Checkpoint {
    pub fn from_network(net: &Network, loss: Option<LossSpec>, train: Option<TrainConfig>) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            towers: TowerRecords {
                report: net.report_tower.iter().map(LayerRecord::from_layer).collect(),
                method: net.method_tower.iter().map(LayerRecord::from_layer).collect(),
            },
            head: LayerRecord::from_layer(&net.head),
            config: CheckpointConfig {
                report_tower: net.report_config(),
                method_tower: net.method_config(),
                loss,
                train,
            },
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let net = Network {
            report_tower: tower_from_records(&self.towers.report, "report")?,
            method_tower: tower_from_records(&self.towers.method, "method")?,
            head: self.head.to_layer("head")?,
        };
        let joined = net.report_tower.last().unwrap().output_dim() + net.method_tower.last().unwrap().output_dim();
        if net.head.input_dim() != joined || net.head.output_dim() != 1 {
            return Err(Error::dim(joined, net.head.input_dim(), "head input"));
        }
        if !net.is_finite() {
            return Err(Error::Config("checkpoint contains non-finite parameters".into()));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(source, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}
