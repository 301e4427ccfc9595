//! Training config file and the small parsers shared by the subcommands.

use mlatk_core::model::{Activation, Loss};
use mlatk_core::train::TrainConfig;
use mlatk_core::{Error, Result};
use serde::Deserialize;

/// Training run description. Flags override individual fields after load.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    /// Dataset path (sparse text format).
    pub data: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSection,
    pub normalize_mu_x: Option<f64>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `linear` or `mlp`.
    #[serde(default = "default_kind")]
    pub kind: String,
    /// Hidden layer widths (`mlp` only); the label-count output layer is
    /// appended automatically.
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Hidden activation (`mlp` only): identity, tanh or sigmoid.
    #[serde(default = "default_activation")]
    pub activation: String,
}

fn default_kind() -> String {
    "linear".into()
}

fn default_activation() -> String {
    "tanh".into()
}

impl Default for ModelSection {
    fn default() -> ModelSection {
        ModelSection { kind: default_kind(), hidden: Vec::new(), activation: default_activation() }
    }
}

/// Split fractions applied after load; the text format stores no split tags.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
    #[serde(default)]
    pub seed: u64,
}

fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

impl Default for SplitSection {
    fn default() -> SplitSection {
        SplitSection { fractions: default_fractions(), seed: 0 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub checkpoint: Option<String>,
    pub manifest: Option<String>,
}

pub fn load_train_file(path: &str) -> Result<TrainFile> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("config {}: {}", path, e.message())))
}

pub fn parse_loss(name: &str) -> Result<Loss> {
    match name {
        "zero_one" => Ok(Loss::ZeroOne),
        "lse" => Ok(Loss::Lse),
        "squared_hinge" => Ok(Loss::SquaredHinge),
        "logistic" => Ok(Loss::Logistic),
        other => Err(Error::InvalidArgument(format!(
            "unknown loss {:?}; expected zero_one, lse, squared_hinge or logistic",
            other
        ))),
    }
}

pub fn parse_activation(name: &str) -> Result<Activation> {
    match name {
        "identity" => Ok(Activation::Identity),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => Err(Error::InvalidArgument(format!(
            "unknown activation {:?}; expected identity, tanh or sigmoid",
            other
        ))),
    }
}

/// Comma-separated float list, e.g. `0.1,0.5,1.0`.
pub fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {:?} in list {:?}", tok, text)))
        })
        .collect()
}

/// Comma-separated usize list, e.g. `32,16`.
pub fn parse_usizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad count {:?} in list {:?}", tok, text)))
        })
        .collect()
}

/// Three comma-separated split fractions.
pub fn parse_fractions(text: &str) -> Result<[f64; 3]> {
    let v = parse_floats(text)?;
    if v.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected three split fractions, got {} in {:?}",
            v.len(),
            text
        )));
    }
    Ok([v[0], v[1], v[2]])
}
