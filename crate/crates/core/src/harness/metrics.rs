use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::classifier::Prediction;
use crate::corpus::{Fragment, Label, LabeledEntity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub per_class: BTreeMap<Label, ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsRecord {
    /// Per-class scores with each class in turn as the positive one;
    /// macro values are plain means over the two classes.
    pub fn from_pairs(pairs: &[(Label, Label)]) -> Self {
        let mut per_class = BTreeMap::new();
        for class in Label::ALL {
            let (mut tp, mut fp, mut fneg) = (0, 0, 0);
            for &(gold, pred) in pairs {
                match (gold == class, pred == class) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    (false, false) => {}
                }
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fneg);
            per_class.insert(
                class,
                ClassMetrics {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support: tp + fneg,
                },
            );
        }
        let mean = |get: fn(&ClassMetrics) -> f64| per_class.values().map(get).sum::<f64>() / 2.0;
        let macro_avg = MacroMetrics {
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
        };
        MetricsRecord {
            per_class,
            macro_avg,
        }
    }

    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[&label]
    }

    /// Field-wise means of P/R/F; supports are summed.
    pub fn average(records: &[MetricsRecord]) -> Option<MetricsRecord> {
        if records.is_empty() {
            return None;
        }
        let n = records.len() as f64;
        let mut per_class = BTreeMap::new();
        for class in Label::ALL {
            let cs: Vec<&ClassMetrics> = records.iter().map(|r| r.class(class)).collect();
            per_class.insert(
                class,
                ClassMetrics {
                    precision: cs.iter().map(|c| c.precision).sum::<f64>() / n,
                    recall: cs.iter().map(|c| c.recall).sum::<f64>() / n,
                    f1: cs.iter().map(|c| c.f1).sum::<f64>() / n,
                    support: cs.iter().map(|c| c.support).sum(),
                },
            );
        }
        let macro_avg = MacroMetrics {
            precision: records.iter().map(|r| r.macro_avg.precision).sum::<f64>() / n,
            recall: records.iter().map(|r| r.macro_avg.recall).sum::<f64>() / n,
            f1: records.iter().map(|r| r.macro_avg.f1).sum::<f64>() / n,
        };
        Some(MetricsRecord {
            per_class,
            macro_avg,
        })
    }

    /// Copy with every P/R/F rounded to three decimals.
    pub fn rounded(&self) -> MetricsRecord {
        let r = |x: f64| (x * 1000.0).round() / 1000.0;
        MetricsRecord {
            per_class: self
                .per_class
                .iter()
                .map(|(k, c)| {
                    (
                        *k,
                        ClassMetrics {
                            precision: r(c.precision),
                            recall: r(c.recall),
                            f1: r(c.f1),
                            support: c.support,
                        },
                    )
                })
                .collect(),
            macro_avg: MacroMetrics {
                precision: r(self.macro_avg.precision),
                recall: r(self.macro_avg.recall),
                f1: r(self.macro_avg.f1),
            },
        }
    }
}

type Key<'a> = (&'a str, &'a [Fragment]);

/// Aligns predictions with gold entities by (review id, fragments).
///
/// Repeated keys are paired in order of appearance.
pub fn compute_metrics(
    gold: &[LabeledEntity],
    predictions: &[Prediction],
) -> Result<MetricsRecord> {
    let mut pending: HashMap<Key<'_>, VecDeque<Label>> = HashMap::new();
    for g in gold {
        pending
            .entry((g.span.review_id.as_str(), g.span.fragments.as_slice()))
            .or_default()
            .push_back(g.label);
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    let mut unmatched = Vec::new();
    for p in predictions {
        let key = (p.review_id.as_str(), p.span.fragments.as_slice());
        match pending.get_mut(&key).and_then(VecDeque::pop_front) {
            Some(label) => pairs.push((label, p.label)),
            None => unmatched.push(format!("prediction {}{:?}", p.review_id, p.span.fragments)),
        }
    }
    let mut missing: Vec<String> = pending
        .iter()
        .filter(|(_, q)| !q.is_empty())
        .map(|((id, frags), q)| format!("gold {id}{frags:?} x{}", q.len()))
        .collect();
    missing.sort();
    unmatched.extend(missing);
    if !unmatched.is_empty() {
        let shown: Vec<_> = unmatched.iter().take(10).cloned().collect();
        return Err(Error::Alignment(format!(
            "{} unaligned item(s): {}",
            unmatched.len(),
            shown.join(", ")
        )));
    }
    Ok(MetricsRecord::from_pairs(&pairs))
}
