//! Experiment configuration: JSON file, CSV header reload, and flag overrides.
//!
//! Precedence, highest first: command-line flags, the config file, built-in defaults.

use std::path::{Path, PathBuf};

use bfgrad::sbn::TrainConfig;
use bfgrad::{EstimatorConfig, EstimatorKind, ProductDistribution};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::function_spec::{parse_function, FunctionSpec};

/// Prefix of the first line of every emitted file.
pub const HEADER_PREFIX: &str = "# config: ";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Optimiser, model shape and estimator. Its `seed` is replaced by the top-level seed.
    pub config: TrainConfig,
    /// Dataset file of `0`/`1` rows; the synthetic 6x6 set when absent.
    pub data: Option<PathBuf>,
    pub synthetic_count: usize,
    pub flip: f64,
    pub data_seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { config: TrainConfig::default(), data: None, synthetic_count: 256, flip: 0.05, data_seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Per-coordinate probabilities of +1; empty means 0.5 on the inferred dimension.
    pub p: Vec<f64>,
    pub functions: Vec<String>,
    /// Control-variate function for the estimators; `f` itself when absent.
    pub g: Option<String>,
    pub estimators: Vec<EstimatorConfig>,
    pub trials: usize,
    pub out: Option<PathBuf>,
    pub fd_step: f64,
    pub gradcheck_tol: f64,
    /// Norm order for `hyper`.
    pub q: f64,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            p: Vec::new(),
            functions: vec!["maj(3)".into()],
            g: None,
            estimators: vec![EstimatorConfig::new(EstimatorKind::Reinforce), EstimatorConfig::new(EstimatorKind::FourierCv)],
            trials: 100_000,
            out: None,
            fd_step: bfgrad::operators::DEFAULT_FD_STEP,
            gradcheck_tol: 1e-6,
            q: 4.0,
            train: TrainSection::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub rho: Option<f64>,
    pub estimator: Option<String>,
    pub functions: Vec<String>,
    pub p: Option<Vec<f64>>,
}

/// A validated configuration with its parsed functions and distribution.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub functions: Vec<FunctionSpec>,
    pub g: Option<FunctionSpec>,
    pub dist: ProductDistribution,
}

impl Resolved {
    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    /// The `# config: {...}` line written at the top of every output.
    pub fn header(&self) -> String {
        let json = serde_json::to_string(&self.config).expect("config serialises");
        format!("{HEADER_PREFIX}{json}\n")
    }
}

/// Reads a JSON config, or the header line of a previously emitted file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let json = match text.strip_prefix(HEADER_PREFIX) {
        Some(rest) => rest.lines().next().unwrap_or(""),
        None => text,
    };
    serde_json::from_str(json).map_err(|e| CliError::Config(format!("config: {e}")))
}

/// Parses a comma-separated probability list.
pub fn parse_p_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad probability {t:?}"))))
        .collect()
}

pub fn resolve(o: &Overrides) -> Result<Resolved, CliError> {
    let mut cfg = match &o.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &o.out {
        cfg.out = Some(out.clone());
    }
    if let Some(trials) = o.trials {
        cfg.trials = trials;
    }
    if !o.functions.is_empty() {
        cfg.functions = o.functions.clone();
    }
    if let Some(p) = &o.p {
        cfg.p = p.clone();
    }
    if let Some(name) = &o.estimator {
        let kind: EstimatorKind = name.parse()?;
        cfg.estimators = vec![EstimatorConfig::new(kind)];
        cfg.train.config.estimator.kind = kind;
    }
    if let Some(rho) = o.rho {
        cfg.estimators.iter_mut().for_each(|e| e.rho = rho);
        cfg.train.config.estimator.rho = rho;
    }
    cfg.train.config.seed = cfg.seed;
    validate(cfg)
}

pub fn validate(cfg: ExperimentConfig) -> Result<Resolved, CliError> {
    let parse = |s: &String| parse_function(s).map_err(|e| CliError::Config(format!("function {s:?}: {e}")));
    let functions = cfg.functions.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
    if functions.is_empty() {
        return Err(CliError::Config("no functions given".into()));
    }
    let g = cfg.g.as_ref().map(parse).transpose()?;
    let needed = functions.iter().chain(&g).map(FunctionSpec::min_dim).max().unwrap_or(1);
    let dist = if cfg.p.is_empty() {
        ProductDistribution::uniform(needed, 0.5)?
    } else {
        if cfg.p.len() < needed {
            return Err(CliError::Config(format!("{} probabilities given, functions need {needed}", cfg.p.len())));
        }
        ProductDistribution::new(cfg.p.clone())?
    };
    for e in &cfg.estimators {
        e.validate()?;
    }
    cfg.train.config.validate()?;
    if cfg.trials < 2 {
        return Err(CliError::Config("trials must be at least 2".into()));
    }
    if !(cfg.fd_step > 0.0 && cfg.gradcheck_tol > 0.0) {
        return Err(CliError::Config("fd_step and gradcheck_tol must be positive".into()));
    }
    Ok(Resolved { config: cfg, functions, g, dist })
}
