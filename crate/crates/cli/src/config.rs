//! JSON run configuration. Unknown keys are rejected so typos fail fast.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::errors::AppError;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub model: Option<ModelConfig>,
    pub brbvs: Option<BrbvsConfig>,
    pub scenario: Option<ScenarioBlock>,
    /// covariate columns to expand into reference-coded indicators
    #[serde(default)]
    pub categorical: Vec<String>,
    pub contour: Option<ContourConfig>,
    pub bench: Option<BenchConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub copula: String,
    pub margins: [String; 2],
    pub eta1: PredictorConfig,
    pub eta2: PredictorConfig,
    pub eta3: Option<PredictorConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// monotone baseline smooth of time (absorbs the intercept)
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default)]
    pub linear: Vec<String>,
    #[serde(default)]
    pub smooth: Vec<String>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig { baseline: true, linear: vec![], smooth: vec![] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrbvsConfig {
    pub b: Option<usize>,
    pub m: Option<usize>,
    pub kmax: Option<usize>,
    pub tau: Option<f64>,
    pub metric: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    #[serde(default)]
    pub scenario_b_intercept: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourConfig {
    /// covariate profile by column name; unmentioned covariates sit at 0
    #[serde(default)]
    pub x0: BTreeMap<String, f64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    40
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub scenarios: Vec<String>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub p: Vec<usize>,
    #[serde(default)]
    pub metrics: Vec<String>,
    pub n_rep: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, AppError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {}", path.display(), e)))?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {}", path.display(), e)))
    }
}
