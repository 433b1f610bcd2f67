//! Entity-level ADR classification.
//!
//! A [`Trainer`] turns labeled [`EntityInContext`] examples into a
//! [`Model`]. The crate ships [`LogisticTrainer`]; neural models run out of
//! process through [`CommandTrainer`].

mod context;
mod features;
mod logistic;
mod plugin;

use std::any::Any;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, Label};
use crate::error::{Error, Result};

pub use context::{make_context, EntityInContext, Window, SENTINEL};
pub use features::extract as extract_features;
pub use logistic::{sigmoid, LogisticModel, LogisticTrainer, Objective, SparseRow};
pub use plugin::CommandTrainer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub dropout: f64,
    pub seed: u64,
    #[serde(default)]
    pub window: Window,
}

impl Default for TrainConfig {
    /// IAN settings: 15 epochs, batch 128, 300 hidden units, lr 0.01,
    /// L2 0.001, dropout 0.5.
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 128,
            hidden_units: 300,
            learning_rate: 0.01,
            l2: 0.001,
            dropout: 0.5,
            seed: 42,
            window: Window::Whole,
        }
    }
}

impl TrainConfig {
    pub fn ian() -> Self {
        Self::default()
    }

    /// BioBERT plugin defaults. Only the epoch count is published; the
    /// rest are conventional fine-tuning values.
    pub fn bert() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 32,
            hidden_units: 768,
            learning_rate: 2e-5,
            l2: 0.01,
            dropout: 0.1,
            ..Self::default()
        }
    }

    /// Settings for the built-in log-linear model.
    pub fn baseline() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            hidden_units: 1,
            learning_rate: 0.5,
            l2: 1e-4,
            dropout: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.epochs == 0 {
            bad.push("epochs must be positive");
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be positive");
        }
        if self.hidden_units == 0 {
            bad.push("hidden_units must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad.push("learning_rate must be positive");
        }
        if !(self.l2 > 0.0 && self.l2.is_finite()) {
            bad.push("l2 must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push("dropout must be in [0, 1)");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub review_id: String,
    pub span: EntitySpan,
    pub label: Label,
    /// Probability of ADR.
    pub score: f64,
}

/// What a trainer promises about reruns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub deterministic: bool,
    pub seedable: bool,
}

pub trait Model: Send + Sync {
    fn id(&self) -> &str;

    /// ADR probabilities, one per example, in input order.
    fn scores(&self, examples: &[EntityInContext]) -> Result<Vec<f64>>;

    fn as_any(&self) -> &dyn Any;
}

pub trait Trainer: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// `init`, when given, seeds the weights instead of a fresh start.
    fn train(
        &self,
        config: &TrainConfig,
        examples: &[(EntityInContext, Label)],
        init: Option<&dyn Model>,
    ) -> Result<Box<dyn Model>>;
}

/// Checks the config and class balance, then delegates to `trainer`.
pub fn train(
    trainer: &dyn Trainer,
    config: &TrainConfig,
    examples: &[(EntityInContext, Label)],
    init: Option<&dyn Model>,
) -> Result<Box<dyn Model>> {
    config.validate()?;
    for label in Label::ALL {
        if !examples.iter().any(|(_, l)| *l == label) {
            return Err(Error::Training(format!(
                "no {label} examples among {}; a single-class model is degenerate",
                examples.len()
            )));
        }
    }
    trainer.train(config, examples, init)
}

pub fn predict(model: &dyn Model, examples: &[EntityInContext]) -> Result<Vec<Prediction>> {
    let scores = model.scores(examples)?;
    if scores.len() != examples.len() {
        return Err(Error::Plugin(format!(
            "model {} returned {} scores for {} examples",
            model.id(),
            scores.len(),
            examples.len()
        )));
    }
    examples
        .iter()
        .zip(scores)
        .map(|(ex, score)| {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Plugin(format!(
                    "model {} produced score {score} outside [0, 1]",
                    model.id()
                )));
            }
            Ok(Prediction {
                review_id: ex.review_id.clone(),
                span: ex.span.clone(),
                label: Label::from_score(score),
                score,
            })
        })
        .collect()
}
