//! Flat TOML run configuration shared by every subcommand.
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use cwc_core::nn::{Activation, Dataset, LambdaSchedule, LossMode, TrainConfig};
use cwc_core::pipeline::CompressMode;

use crate::CliError;

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];
pub const DEFAULT_EVAL_FRACTION: f64 = 0.25;
pub const DEFAULT_K: usize = 256;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // data
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub eval_fraction: Option<f64>,
    pub split_seed: Option<u64>,

    // model and training
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<String>,
    pub bias: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub lambda_increment: Option<f64>,
    pub loss_mode: Option<String>,
    pub layer_lambdas: Option<Vec<f64>>,
    pub include_biases: Option<bool>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,

    // compression
    pub sparsity: Option<f64>,
    pub k: Option<usize>,
    pub mode: Option<String>,
    pub artifact: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub format: Option<String>,

    // sweep grids
    pub lambda_grid: Option<Vec<f64>>,
    pub sparsity_grid: Option<Vec<f64>>,
    pub k_grid: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub modes: Option<Vec<String>>,
    pub checkpoint_dir: Option<PathBuf>,

    // theory verification
    pub dimension: Option<usize>,
    pub trials: Option<usize>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data,
            &mut cfg.eval_data,
            &mut cfg.checkpoint,
            &mut cfg.log,
            &mut cfg.artifact,
            &mut cfg.report,
            &mut cfg.checkpoint_dir,
        ] {
            resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn activation(&self) -> Result<Activation, CliError> {
        let name = self.activation.as_deref().unwrap_or("tanh");
        Activation::parse(name)
            .ok_or_else(|| CliError::Usage(format!("unknown activation `{name}`")))
    }

    /// With no `lambda` given the default is the ramp from 0 by 0.007 per
    /// epoch; an explicit `lambda` is held fixed unless `lambda_increment`
    /// is also set.
    pub fn schedule(&self) -> LambdaSchedule {
        match (self.lambda, self.lambda_increment) {
            (None, None) => LambdaSchedule::default_ramp(),
            (l, inc) => LambdaSchedule {
                initial: l.unwrap_or(0.0),
                per_epoch_increment: inc.unwrap_or(0.0),
            },
        }
    }

    pub fn loss_mode(&self) -> Result<LossMode, CliError> {
        match self.loss_mode.as_deref().unwrap_or("concatenated") {
            "concatenated" => Ok(LossMode::Concatenated),
            "per_layer" => Ok(LossMode::PerLayer(self.layer_lambdas.clone().ok_or_else(
                || CliError::Usage("per_layer loss mode needs `layer_lambdas`".into()),
            )?)),
            other => Err(CliError::Usage(format!("unknown loss mode `{other}`"))),
        }
    }

    pub fn train_config(
        &self,
        schedule: LambdaSchedule,
        seed: u64,
    ) -> Result<TrainConfig, CliError> {
        let defaults = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
            seed,
            schedule,
            loss_mode: self.loss_mode()?,
            include_biases: self.include_biases.unwrap_or(true),
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.hidden
            .clone()
            .unwrap_or_else(|| DEFAULT_HIDDEN.to_vec())
    }

    /// Train and eval sets: an explicit eval file, or a seeded split of `data`.
    pub fn datasets(&self) -> Result<(Dataset, Dataset), CliError> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage("no dataset given (`data` key or --data)".into()))?;
        let data = load_data(path)?;
        match &self.eval_data {
            Some(e) => Ok((data, load_data(e)?)),
            None => data
                .split(
                    self.eval_fraction.unwrap_or(DEFAULT_EVAL_FRACTION),
                    self.split_seed.unwrap_or(0),
                )
                .map_err(|e| CliError::Usage(e.to_string())),
        }
    }

    /// The set used to score compressed models, if any data was configured.
    pub fn eval_set(&self) -> Result<Option<Dataset>, CliError> {
        if let Some(e) = &self.eval_data {
            return load_data(e).map(Some);
        }
        if self.data.is_some() {
            return self.datasets().map(|(_, e)| Some(e));
        }
        Ok(None)
    }
}

pub fn load_data(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "dataset {} does not exist",
            path.display()
        )));
    }
    Dataset::load(path).map_err(|e| CliError::Runtime(format!("dataset {}: {e}", path.display())))
}

pub fn parse_mode(name: &str) -> Result<CompressMode, CliError> {
    CompressMode::parse(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown mode `{name}` (expected one of mask_only, masked, zero_cluster)"
        ))
    })
}

pub fn check_sparsity(s: f64) -> Result<f64, CliError> {
    if (0.0..1.0).contains(&s) {
        Ok(s)
    } else {
        Err(CliError::Usage(format!("sparsity {s} must be in [0, 1)")))
    }
}

pub fn check_k(k: usize) -> Result<usize, CliError> {
    if k >= 1 {
        Ok(k)
    } else {
        Err(CliError::Usage("k must be >= 1".into()))
    }
}
