//! Ways of attaching the compressibility loss to a model's parameters.

use std::collections::BTreeMap;

use super::model::ModelParams;
use crate::error::{LossError, TrainError};
use crate::loss::{compressibility_grad_into, Norms};

/// A compressibility penalty over some grouping of model parameters.
pub trait CompressibilityPenalty: Send + Sync {
    fn name(&self) -> &'static str;

    /// Unweighted loss used for logging: `L(w_net)` or `Σ L(w_i)`.
    fn comp_loss(&self, model: &ModelParams) -> Result<f64, LossError>;

    /// The weighted term added to the task loss at scheduled strength `lambda`.
    fn weighted(&self, model: &ModelParams, lambda: f64) -> Result<f64, LossError>;

    /// Adds the gradient of [`weighted`](Self::weighted) into `grad`.
    fn add_gradient(
        &self,
        model: &ModelParams,
        lambda: f64,
        grad: &mut ModelParams,
    ) -> Result<(), LossError>;
}

/// `λ · L(w_net)` over every tensor flattened together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Concatenated {
    pub include_biases: bool,
}

impl CompressibilityPenalty for Concatenated {
    fn name(&self) -> &'static str {
        "concatenated"
    }

    fn comp_loss(&self, model: &ModelParams) -> Result<f64, LossError> {
        Ok(Norms::of(&model.flatten_with(self.include_biases))?.loss())
    }

    fn weighted(&self, model: &ModelParams, lambda: f64) -> Result<f64, LossError> {
        Ok(lambda * self.comp_loss(model)?)
    }

    fn add_gradient(
        &self,
        model: &ModelParams,
        lambda: f64,
        grad: &mut ModelParams,
    ) -> Result<(), LossError> {
        let w = model.flatten_with(self.include_biases);
        let mut g = vec![0.0; w.len()];
        compressibility_grad_into(&w, &mut g)?;
        grad.for_each_param_mut(self.include_biases, |i, p| *p += lambda * g[i]);
        Ok(())
    }
}

/// `Σ λ_i · L(w_i)` with a fixed coefficient per layer; the scheduled λ is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PerLayer {
    pub lambdas: Vec<f64>,
    pub include_biases: bool,
}

impl PerLayer {
    fn check(&self, model: &ModelParams) {
        assert_eq!(
            self.lambdas.len(),
            model.layers.len(),
            "per-layer penalty built for a different model"
        );
    }
}

impl CompressibilityPenalty for PerLayer {
    fn name(&self) -> &'static str {
        "per_layer"
    }

    fn comp_loss(&self, model: &ModelParams) -> Result<f64, LossError> {
        self.check(model);
        model
            .layers
            .iter()
            .map(|l| Ok(Norms::of(&l.flat(self.include_biases))?.loss()))
            .sum()
    }

    fn weighted(&self, model: &ModelParams, _lambda: f64) -> Result<f64, LossError> {
        self.check(model);
        model
            .layers
            .iter()
            .zip(&self.lambdas)
            .map(|(l, &li)| Ok(li * Norms::of(&l.flat(self.include_biases))?.loss()))
            .sum()
    }

    fn add_gradient(
        &self,
        model: &ModelParams,
        _lambda: f64,
        grad: &mut ModelParams,
    ) -> Result<(), LossError> {
        self.check(model);
        for ((l, gl), &li) in model.layers.iter().zip(&mut grad.layers).zip(&self.lambdas) {
            let w = l.flat(self.include_biases);
            let mut g = vec![0.0; w.len()];
            compressibility_grad_into(&w, &mut g)?;
            let (gw, gb) = g.split_at(l.weights.len());
            for (p, v) in gl.weights.iter_mut().zip(gw) {
                *p += li * v;
            }
            if let Some(b) = gl.bias.as_mut().filter(|_| self.include_biases) {
                for (p, v) in b.iter_mut().zip(gb) {
                    *p += li * v;
                }
            }
        }
        Ok(())
    }
}

/// Options handed to a penalty factory.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOptions {
    pub include_biases: bool,
    pub layer_lambdas: Vec<f64>,
    pub layer_count: usize,
}

type Factory = fn(&PenaltyOptions) -> Result<Box<dyn CompressibilityPenalty>, TrainError>;

/// Penalty constructors by name.
pub struct PenaltyRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl PenaltyRegistry {
    pub fn empty() -> Self {
        PenaltyRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("concatenated", |o| {
            Ok(Box::new(Concatenated {
                include_biases: o.include_biases,
            }))
        });
        r.register("per_layer", |o| {
            if o.layer_lambdas.len() != o.layer_count {
                return Err(TrainError::Config(format!(
                    "per_layer mode needs {} lambdas, got {}",
                    o.layer_count,
                    o.layer_lambdas.len()
                )));
            }
            if o.layer_lambdas
                .iter()
                .any(|l| !(l.is_finite() && *l >= 0.0))
            {
                return Err(TrainError::Config(
                    "per-layer lambdas must be finite and >= 0".into(),
                ));
            }
            Ok(Box::new(PerLayer {
                lambdas: o.layer_lambdas.clone(),
                include_biases: o.include_biases,
            }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        options: &PenaltyOptions,
    ) -> Result<Box<dyn CompressibilityPenalty>, TrainError> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| TrainError::UnknownPenalty(name.to_string()))?;
        f(options)
    }
}

impl Default for PenaltyRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
