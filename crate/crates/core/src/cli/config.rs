//! Strict JSON configs for each subcommand.
//!
//! Matrices are row-major arrays of arrays and states are 1-based. Unknown
//! keys are rejected and errors carry the JSON path of the offending field.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stickcore::FractionLaw;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SampleGemConfig {
    pub law: FractionLaw,
    pub eps: Option<f64>,
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SampleMccgemConfig {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub eps: Option<f64>,
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Option<u64>,
    pub pi: Vec<f64>,
    pub n: usize,
    pub replicates: Option<u64>,
    /// Also write every sampled path.
    #[serde(default)]
    pub write_paths: bool,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OccupationConfig {
    /// 1-based states.
    pub path: Vec<usize>,
    /// Number of states; defaults to the largest state on the path.
    pub k: Option<usize>,
    /// Horizon; defaults to the path length.
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub max_order: usize,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MarginalsConfig {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub max_order: u32,
    /// 1-based; all states when absent.
    pub state: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AcceptConfig {
    /// Criterion ids; every criterion when absent.
    pub criteria: Option<Vec<u32>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CovarianceConfig {
    #[serde(default = "default_p_stay")]
    pub p_stay: f64,
    #[serde(default = "default_terms")]
    pub terms: usize,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn default_p_stay() -> f64 {
    0.5
}

fn default_terms() -> usize {
    200
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self {
            p_stay: default_p_stay(),
            terms: default_terms(),
            seed: None,
            out_dir: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BetaCheckConfig {
    pub theta: f64,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub state: usize,
    pub replicates: u64,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CycleCheckConfig {
    pub law: FractionLaw,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub start: usize,
    pub eps: Option<f64>,
    pub replicates: u64,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeakErgodicConfig {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Option<u64>,
    pub pi: Vec<f64>,
    pub n: usize,
    pub theta: Option<f64>,
    /// Pass when the L1 distance to the stationary law ends below this.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn default_tolerance() -> f64 {
    1e-2
}

/// Reads and parses `path` as `T`, reporting the field path on schema errors
/// and line/column on syntax errors.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let field = e.path().to_string();
        if inner.is_syntax() || inner.is_eof() {
            Error::Config(format!(
                "line {} column {}: {inner}",
                inner.line(),
                inner.column()
            ))
        } else {
            Error::Config(format!("at `{field}`: {inner}"))
        }
    })
}

/// SHA-256 of the canonical JSON form of `value` (keys sorted).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value)
        .and_then(|v| serde_json::to_vec(&v))
        .expect("config types serialize");
    let digest = Sha256::digest(&canonical);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
