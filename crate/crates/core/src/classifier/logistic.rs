//! L2-regularized logistic regression over sparse binary indicators.

use std::any::Any;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::context::EntityInContext;
use super::{features, Capabilities, Model, TrainConfig, Trainer};
use crate::corpus::Label;
use crate::error::{Error, Result};

/// One training row: active feature indices (unique) and a 0/1 target.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub features: Vec<usize>,
    pub target: f64,
}

/// Mean logistic loss plus `l2 / 2 * |w|^2`.
///
/// `params[0]` is an unregularized bias active on every row; feature `j`
/// of a row addresses `params[j + 1]`.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub rows: &'a [SparseRow],
    pub l2: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn margin(params: &[f64], row: &SparseRow) -> f64 {
    params[0] + row.features.iter().map(|&j| params[j + 1]).sum::<f64>()
}

impl Objective<'_> {
    pub fn loss(&self, params: &[f64]) -> f64 {
        let n = self.rows.len().max(1) as f64;
        let data: f64 = self
            .rows
            .iter()
            .map(|r| {
                let z = margin(params, r);
                softplus(z) - r.target * z
            })
            .sum();
        let reg: f64 = params[1..].iter().map(|w| w * w).sum();
        data / n + 0.5 * self.l2 * reg
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        let mut grad = vec![0.0; params.len()];
        for r in self.rows {
            let residual = sigmoid(margin(params, r)) - r.target;
            grad[0] += residual;
            for &j in &r.features {
                grad[j + 1] += residual;
            }
        }
        for g in &mut grad {
            *g /= n;
        }
        for (g, w) in grad[1..].iter_mut().zip(&params[1..]) {
            *g += self.l2 * w;
        }
        grad
    }
}

/// Trained log-linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    id: String,
    feature_names: Vec<String>,
    params: Vec<f64>,
    index: HashMap<String, usize>,
}

impl LogisticModel {
    fn new(feature_names: Vec<String>, params: Vec<f64>) -> Self {
        let mut hasher = Sha256::new();
        for (name, w) in feature_names.iter().zip(&params[1..]) {
            hasher.update(name.as_bytes());
            hasher.update(w.to_le_bytes());
        }
        hasher.update(params[0].to_le_bytes());
        let id = format!("baseline-logreg:{}", &hex::encode(hasher.finalize())[..12]);
        let index = feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        LogisticModel {
            id,
            feature_names,
            params,
            index,
        }
    }

    pub fn bias(&self) -> f64 {
        self.params[0]
    }

    pub fn weight(&self, feature: &str) -> Option<f64> {
        self.index.get(feature).map(|&i| self.params[i + 1])
    }

    /// Overwrites one feature weight. Returns false for unknown features.
    pub fn set_weight(&mut self, feature: &str, value: f64) -> bool {
        match self.index.get(feature) {
            Some(&i) => {
                self.params[i + 1] = value;
                true
            }
            None => false,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Features of `example` known to the model.
    pub fn active_features(&self, example: &EntityInContext) -> Vec<String> {
        features::extract(example)
            .into_iter()
            .filter(|f| self.index.contains_key(f))
            .collect()
    }

    pub fn score(&self, example: &EntityInContext) -> f64 {
        let z = self.params[0]
            + features::extract(example)
                .iter()
                .filter_map(|f| self.index.get(f))
                .map(|&i| self.params[i + 1])
                .sum::<f64>();
        sigmoid(z)
    }
}

impl Model for LogisticModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn scores(&self, examples: &[EntityInContext]) -> Result<Vec<f64>> {
        Ok(examples.iter().map(|e| self.score(e)).collect())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Built-in trainer: mini-batch gradient descent on [`Objective`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticTrainer;

impl LogisticTrainer {
    pub fn fit(
        &self,
        config: &TrainConfig,
        examples: &[(EntityInContext, Label)],
        init: Option<&LogisticModel>,
    ) -> Result<LogisticModel> {
        let extracted: Vec<_> = examples.iter().map(|(e, _)| features::extract(e)).collect();
        let mut names: Vec<String> = extracted.iter().flatten().cloned().collect();
        if let Some(m) = init {
            names.extend(m.feature_names.iter().cloned());
        }
        names.sort();
        names.dedup();
        let index: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();

        let rows: Vec<SparseRow> = extracted
            .iter()
            .zip(examples)
            .map(|(feats, (_, label))| SparseRow {
                features: feats.iter().map(|f| index[f.as_str()]).collect(),
                target: label.target(),
            })
            .collect();

        let mut params = vec![0.0; names.len() + 1];
        if let Some(m) = init {
            params[0] = m.params[0];
            for (name, w) in m.feature_names.iter().zip(&m.params[1..]) {
                params[index[name.as_str()] + 1] = *w;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let batch = config.batch_size.max(1);
        let decay = 1.0 - config.learning_rate * config.l2;
        let mut grad: HashMap<usize, f64> = HashMap::new();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                grad.clear();
                let mut bias_grad = 0.0;
                for &i in chunk {
                    let row = &rows[i];
                    let residual = sigmoid(margin(&params, row)) - row.target;
                    bias_grad += residual;
                    for &j in &row.features {
                        *grad.entry(j).or_default() += residual;
                    }
                }
                let step = config.learning_rate / chunk.len() as f64;
                for w in &mut params[1..] {
                    *w *= decay;
                }
                params[0] -= step * bias_grad;
                for (&j, g) in &grad {
                    params[j + 1] -= step * g;
                }
            }
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Training(
                "weights diverged; lower learning_rate".into(),
            ));
        }
        Ok(LogisticModel::new(names, params))
    }
}

impl Trainer for LogisticTrainer {
    fn name(&self) -> &str {
        "baseline"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            deterministic: true,
            seedable: true,
        }
    }

    fn train(
        &self,
        config: &TrainConfig,
        examples: &[(EntityInContext, Label)],
        init: Option<&dyn Model>,
    ) -> Result<Box<dyn Model>> {
        let init = match init {
            None => None,
            Some(m) => Some(m.as_any().downcast_ref::<LogisticModel>().ok_or_else(|| {
                Error::Training(format!("cannot warm-start the baseline from {}", m.id()))
            })?),
        };
        Ok(Box::new(self.fit(config, examples, init)?))
    }
}
