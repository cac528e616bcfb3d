//! Minibatch SGD on task loss plus a compressibility penalty.

use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Dataset;
use super::model::{argmax, Activation, Layer, ModelParams};
use super::penalty::{CompressibilityPenalty, PenaltyOptions, PenaltyRegistry};
use crate::error::{TensorIoError, TrainError};
use crate::tensor_io::{self, Tensor, TensorData};

/// `λ(e) = initial + e · per_epoch_increment`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub per_epoch_increment: f64,
}

impl LambdaSchedule {
    pub const fn constant(lambda: f64) -> Self {
        LambdaSchedule {
            initial: lambda,
            per_epoch_increment: 0.0,
        }
    }

    /// Starts at zero and grows by 0.007 each epoch.
    pub const fn default_ramp() -> Self {
        LambdaSchedule {
            initial: 0.0,
            per_epoch_increment: 0.007,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        self.initial + epoch as f64 * self.per_epoch_increment
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.initial) || !ok(self.per_epoch_increment) {
            return Err(TrainError::Config(format!(
                "lambda schedule {self:?} must be finite and >= 0"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossMode {
    Concatenated,
    PerLayer(Vec<f64>),
}

impl LossMode {
    pub fn name(&self) -> &'static str {
        match self {
            LossMode::Concatenated => "concatenated",
            LossMode::PerLayer(_) => "per_layer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: LambdaSchedule,
    pub loss_mode: LossMode,
    pub include_biases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
            schedule: LambdaSchedule::default_ramp(),
            loss_mode: LossMode::Concatenated,
            include_biases: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        self.schedule.validate()
    }

    pub fn penalty(
        &self,
        model: &ModelParams,
    ) -> Result<Box<dyn CompressibilityPenalty>, TrainError> {
        let options = PenaltyOptions {
            include_biases: self.include_biases,
            layer_lambdas: match &self.loss_mode {
                LossMode::PerLayer(l) => l.clone(),
                LossMode::Concatenated => Vec::new(),
            },
            layer_count: model.layers.len(),
        };
        PenaltyRegistry::with_builtin().build(self.loss_mode.name(), &options)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub task: f64,
    pub comp: f64,
    pub total: f64,
}

fn check_compatible(model: &ModelParams, data: &Dataset) -> Result<(), TrainError> {
    if data.dim != model.input_dim() {
        return Err(TrainError::Shape(format!(
            "data has {} features, model expects {}",
            data.dim,
            model.input_dim()
        )));
    }
    if data.classes > model.output_dim() {
        return Err(TrainError::Shape(format!(
            "data has {} classes, model outputs {}",
            data.classes,
            model.output_dim()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over `batch` plus the penalty at strength `lambda`.
pub fn combined_loss(
    model: &ModelParams,
    batch: &Dataset,
    lambda: f64,
    penalty: &dyn CompressibilityPenalty,
) -> Result<LossBreakdown, TrainError> {
    check_compatible(model, batch)?;
    let all: Vec<usize> = (0..batch.len()).collect();
    let task = model.task_loss_and_grad(batch, &all, None);
    let comp = penalty.comp_loss(model)?;
    let total = task + penalty.weighted(model, lambda)?;
    Ok(LossBreakdown { task, comp, total })
}

/// Gradient of [`combined_loss`] over the rows `indices`, with the task loss.
pub fn combined_gradient(
    model: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    lambda: f64,
    penalty: &dyn CompressibilityPenalty,
) -> Result<(f64, ModelParams), TrainError> {
    let mut grad = model.zeros_like();
    let task = model.task_loss_and_grad(data, indices, Some(&mut grad));
    penalty.add_gradient(model, lambda, &mut grad)?;
    Ok((task, grad))
}

pub fn accuracy(model: &ModelParams, data: &Dataset) -> f64 {
    let correct = (0..data.len())
        .filter(|&i| argmax(&model.forward(data.sample(i))) == data.labels[i])
        .count();
    correct as f64 / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub task_loss: f64,
    pub comp_loss: f64,
    pub total: f64,
    pub train_acc: f64,
    pub eval_acc: f64,
}

pub const LOG_HEADER: &str = "epoch,lambda,task_loss,comp_loss,total,train_acc,eval_acc";

pub fn write_log<W: Write>(mut out: W, log: &[EpochRecord]) -> io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.lambda, r.task_loss, r.comp_loss, r.total, r.train_acc, r.eval_acc
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub log: Vec<EpochRecord>,
}

/// Trains `model` in place on `train`, logging metrics after every epoch.
///
/// λ for epoch `e` comes from the schedule; the penalty gradient is
/// skipped at λ = 0 in concatenated mode so an all-zero start is allowed.
pub fn train(
    mut model: ModelParams,
    train: &Dataset,
    eval: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    check_compatible(&model, train)?;
    check_compatible(&model, eval)?;
    let penalty = config.penalty(&model)?;
    let per_layer = matches!(config.loss_mode, LossMode::PerLayer(_));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lambda = config.schedule.at(epoch);
        let active = per_layer || lambda > 0.0;
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let mut grad = model.zeros_like();
            let task = model.task_loss_and_grad(train, idx, Some(&mut grad));
            if !task.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch });
            }
            if active {
                penalty.add_gradient(&model, lambda, &mut grad)?;
            }
            model.add_scaled(&grad, -config.learning_rate);
            if model.flatten().iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFinite { epoch, batch });
            }
        }
        let all: Vec<usize> = (0..train.len()).collect();
        let task_loss = model.task_loss_and_grad(train, &all, None);
        let comp_loss = penalty.comp_loss(&model)?;
        let weighted = if active {
            penalty.weighted(&model, lambda)?
        } else {
            0.0
        };
        log.push(EpochRecord {
            epoch,
            lambda,
            task_loss,
            comp_loss,
            total: task_loss + weighted,
            train_acc: accuracy(&model, train),
            eval_acc: accuracy(&model, eval),
        });
    }
    Ok(TrainOutcome { model, log })
}

/// One tensor per layer parameter plus a manifest of dims, bias flags and activation.
pub fn checkpoint_tensors(model: &ModelParams) -> Vec<Tensor> {
    let dims = model.layer_dims();
    let mut ts = vec![
        Tensor::new(
            "manifest.layer_dims",
            vec![dims.len() as u64],
            TensorData::I64(dims.iter().map(|&d| d as i64).collect()),
        ),
        Tensor::new(
            "manifest.has_bias",
            vec![model.layers.len() as u64],
            TensorData::I64(
                model
                    .layers
                    .iter()
                    .map(|l| i64::from(l.bias.is_some()))
                    .collect(),
            ),
        ),
        Tensor::new(
            "manifest.activation",
            vec![1],
            TensorData::I64(vec![model.activation.code()]),
        ),
    ];
    for (i, l) in model.layers.iter().enumerate() {
        ts.push(Tensor::new(
            format!("layer{i}.weight"),
            vec![l.out_dim as u64, l.in_dim as u64],
            TensorData::F64(l.weights.clone()),
        ));
        if let Some(b) = &l.bias {
            ts.push(Tensor::new(
                format!("layer{i}.bias"),
                vec![b.len() as u64],
                TensorData::F64(b.clone()),
            ));
        }
    }
    ts
}

pub fn model_from_tensors(tensors: &[Tensor]) -> Result<ModelParams, TrainError> {
    let ints = |name: &str| -> Result<Vec<i64>, TrainError> {
        match &tensor_io::find(tensors, name)?.data {
            TensorData::I64(v) => Ok(v.clone()),
            _ => Err(TensorIoError::Format(format!("`{name}` must be i64")).into()),
        }
    };
    let dims = ints("manifest.layer_dims")?;
    let has_bias = ints("manifest.has_bias")?;
    let act = ints("manifest.activation")?;
    let activation = act
        .first()
        .and_then(|&c| Activation::from_code(c))
        .ok_or_else(|| TensorIoError::Format("unknown activation code".into()))?;
    if dims.len() < 2 || has_bias.len() != dims.len() - 1 || dims.iter().any(|&d| d <= 0) {
        return Err(TensorIoError::Format("inconsistent manifest".into()).into());
    }
    let mut layers = Vec::new();
    for i in 0..dims.len() - 1 {
        let w = tensor_io::find(tensors, &format!("layer{i}.weight"))?
            .data
            .to_f64();
        let bias = if has_bias[i] != 0 {
            Some(
                tensor_io::find(tensors, &format!("layer{i}.bias"))?
                    .data
                    .to_f64(),
            )
        } else {
            None
        };
        layers.push(Layer {
            in_dim: dims[i] as usize,
            out_dim: dims[i + 1] as usize,
            weights: w,
            bias,
        });
    }
    ModelParams::new(layers, activation)
}

pub fn save_checkpoint(path: &Path, model: &ModelParams) -> Result<(), TrainError> {
    Ok(tensor_io::write_tensors(path, &checkpoint_tensors(model))?)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, TrainError> {
    model_from_tensors(&tensor_io::read_tensors(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::data::linearly_separable;
    use crate::nn::penalty::Concatenated;

    #[test]
    fn schedule_values() {
        let s = LambdaSchedule::default_ramp();
        assert_eq!(s.at(0), 0.0);
        assert!((s.at(3) - 0.021).abs() < 1e-15);
        assert!(LambdaSchedule::constant(-1.0).validate().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig {
                epochs: 0,
                ..ok.clone()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..ok.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
        }
        let m = ModelParams::init(&[2, 3, 2], true, Activation::Tanh, 0).unwrap();
        let per = TrainConfig {
            loss_mode: LossMode::PerLayer(vec![0.1]),
            ..ok
        };
        assert!(matches!(per.penalty(&m), Err(TrainError::Config(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = ModelParams::init(&[3, 4, 2], true, Activation::Relu, 2).unwrap();
        m.layers[1].bias = None;
        let back = model_from_tensors(&checkpoint_tensors(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn lambda_zero_total_is_task() {
        let d = linearly_separable(20, 0.05, 1).unwrap();
        let m = ModelParams::init(&[2, 4, 2], true, Activation::Tanh, 1).unwrap();
        let p = Concatenated {
            include_biases: true,
        };
        let b = combined_loss(&m, &d, 0.0, &p).unwrap();
        assert_eq!(b.total, b.task);
    }

    #[test]
    fn non_finite_is_reported() {
        let d = linearly_separable(20, 0.05, 1).unwrap();
        let m = ModelParams::init(&[2, 4, 2], true, Activation::Relu, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let r = train(m, &d, &d, &cfg);
        assert!(
            matches!(r, Err(TrainError::NonFinite { .. })),
            "{:?}",
            r.map(|o| o.log)
        );
    }
}
