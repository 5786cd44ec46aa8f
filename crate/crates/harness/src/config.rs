//! Flat TOML experiment configuration with `key=value` overrides.

use std::path::{Path, PathBuf};

use diffsmooth_core::certify::DataConvention;
use diffsmooth_core::classify::TrainConfig;
use diffsmooth_core::stats::{ConfidenceParams, SeedSpec};
use diffsmooth_core::{DiffusionSchedule64, LabeledSample64, MixtureWorld64};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    BayesSmoothed,
    Trained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Smoothing the base classifier directly.
    Plain,
    /// Purify once, no local smoothing.
    Dds,
    /// Purify, then local smoothing.
    Diffsmooth,
    /// Local smoothing without purification.
    Ablation,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Plain => "plain",
            Self::Dds => "dds",
            Self::Diffsmooth => "diffsmooth",
            Self::Ablation => "ablation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// World file; the canonical four-component world when absent.
    pub world: Option<PathBuf>,
    pub steps: usize,
    pub beta1: f64,
    pub beta_t: f64,

    pub classifier: ClassifierKind,
    /// Parameter file for a trained classifier; trained in-process when absent.
    pub model: Option<PathBuf>,
    /// Overrides the per-method augmentation level of the classifier.
    pub sigma_train: Option<f64>,
    pub train_points: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_width: usize,
    pub batch_size: usize,

    pub sigma: Vec<f64>,
    pub sigma_local: Vec<f64>,
    pub m: Vec<usize>,
    pub sigma_local_shift: f64,
    pub data_convention: String,
    pub lambda_predictor_noise: f64,

    pub alpha: f64,
    pub n0: u64,
    pub n: u64,
    pub eval_count: usize,
    pub radius_grid: Vec<f64>,

    pub methods: Vec<Method>,
    /// Local noise of the ablation method; `sigma` when absent.
    pub ablation_sigma_local: Option<f64>,
    pub ablation_m: usize,

    pub eta: Vec<f64>,
    pub alpha_bar_star: f64,
    pub delta_norm: f64,
    pub theorem1_trials: u64,
    pub sde_steps: usize,
    pub theorem2_trials: u64,
    pub conditional_draws: usize,
    pub theorem2_sigma_min: f64,
    pub theorem2_sigma_max: f64,

    pub seed: u64,
    pub workers: usize,
    /// Points certified between flushes of the record file.
    pub chunk_size: usize,
    /// When false the time column is written as 0 so reruns are byte-identical.
    pub record_wall_time: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: None,
            steps: 1000,
            beta1: 1e-4,
            beta_t: 0.02,
            classifier: ClassifierKind::BayesSmoothed,
            model: None,
            sigma_train: None,
            train_points: 4000,
            epochs: 30,
            learning_rate: 0.05,
            hidden_width: 64,
            batch_size: 32,
            sigma: vec![0.5],
            sigma_local: vec![0.25],
            m: vec![5],
            sigma_local_shift: 0.0,
            data_convention: "raw".into(),
            lambda_predictor_noise: 0.0,
            alpha: 0.001,
            n0: 100,
            n: 2000,
            eval_count: 200,
            radius_grid: (0..10).map(|i| i as f64 * 0.25).collect(),
            methods: vec![Method::Plain, Method::Dds, Method::Diffsmooth, Method::Ablation],
            ablation_sigma_local: None,
            ablation_m: 5,
            eta: vec![0.01, 0.05, 0.1],
            alpha_bar_star: 0.9,
            delta_norm: 0.3,
            theorem1_trials: 10_000,
            sde_steps: 1000,
            theorem2_trials: 1000,
            conditional_draws: 512,
            theorem2_sigma_min: 0.1,
            theorem2_sigma_max: 1.0,
            seed: 0,
            workers: 1,
            chunk_size: 16,
            record_wall_time: false,
            out_dir: PathBuf::from("results"),
        }
    }
}

/// Stream tags under the base seed.
pub(crate) mod streams {
    pub const EVAL: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const CERTIFY: u64 = 3;
    pub const PREDICTOR: u64 = 4;
    pub const THEOREM1: u64 = 5;
    pub const THEOREM2: u64 = 6;
}

impl ExperimentConfig {
    /// Reads a config file and applies `key=value` overrides on top of it.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| HarnessError::config(format!("cannot read config file {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| HarnessError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::config(msg));
        if let Some(w) = &self.world {
            if !w.is_file() {
                return bad(format!("world: file {} does not exist", w.display()));
            }
        }
        if let Some(m) = &self.model {
            if !m.is_file() {
                return bad(format!("model: file {} does not exist", m.display()));
            }
        }
        for (key, empty) in [
            ("sigma", self.sigma.is_empty()),
            ("sigma_local", self.sigma_local.is_empty()),
            ("m", self.m.is_empty()),
            ("radius_grid", self.radius_grid.is_empty()),
            ("methods", self.methods.is_empty()),
            ("eta", self.eta.is_empty()),
        ] {
            if empty {
                return bad(format!("{key}: list must not be empty"));
            }
        }
        if self.eval_count == 0 {
            return bad("eval_count: must be >= 1".into());
        }
        if self.workers == 0 || self.chunk_size == 0 {
            return bad("workers and chunk_size must be >= 1".into());
        }
        if self.sigma.iter().any(|&s| !(s > 0.0)) {
            return bad("sigma: every entry must be > 0".into());
        }
        if self.sigma_local.iter().any(|&s| !(s >= 0.0)) {
            return bad("sigma_local: every entry must be >= 0".into());
        }
        if self.m.contains(&0) || self.ablation_m == 0 {
            return bad("m: every entry must be >= 1".into());
        }
        if self.radius_grid.iter().any(|&r| !(r >= 0.0)) {
            return bad("radius_grid: radii must be >= 0".into());
        }
        if !(self.lambda_predictor_noise >= 0.0) {
            return bad("lambda_predictor_noise: must be >= 0".into());
        }
        if self.eta.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("eta: entries must be in (0,1)".into());
        }
        if !(self.alpha_bar_star > 0.0 && self.alpha_bar_star < 1.0) {
            return bad("alpha_bar_star: must be in (0,1)".into());
        }
        self.data_convention()?;
        self.confidence()?;
        self.train_config(0.0).validate()?;
        Ok(())
    }

    pub fn data_convention(&self) -> Result<DataConvention> {
        self.data_convention
            .parse()
            .map_err(|e: diffsmooth_core::Error| HarnessError::config(format!("data_convention: {e}")))
    }

    pub fn confidence(&self) -> Result<ConfidenceParams<f64>> {
        Ok(ConfidenceParams::new(self.alpha, self.n0, self.n)?)
    }

    pub fn base_seed(&self) -> SeedSpec {
        SeedSpec::new(self.seed, 0)
    }

    pub fn train_config(&self, sigma_train: f64) -> TrainConfig<f64> {
        TrainConfig {
            sigma_train,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            hidden_width: self.hidden_width,
            batch_size: self.batch_size,
            seed: self.base_seed().fork(streams::TRAIN),
        }
    }

    /// Training draws, disjoint from the evaluation points.
    pub fn training_set(&self, world: &MixtureWorld64) -> Vec<LabeledSample64> {
        world.sample(&self.base_seed().fork(streams::TRAIN), self.train_points)
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule64> {
        Ok(DiffusionSchedule64::linear(self.steps, self.beta1, self.beta_t)?)
    }

    pub fn world(&self) -> Result<MixtureWorld64> {
        match &self.world {
            Some(p) => MixtureWorld64::load(p).map_err(|e| HarnessError::config(format!("world {}: {e}", p.display()))),
            None => Ok(MixtureWorld64::canonical()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| HarnessError::config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    // Bare words that are not valid TOML are taken as strings.
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    };
    table.insert(key.to_string(), value);
    Ok(())
}
