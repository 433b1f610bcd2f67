use std::collections::{BTreeSet, HashMap, HashSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::folds::{make_folds, FoldAssignment};
use super::metrics::{compute_metrics, MetricsRecord};
use crate::classifier::{
    make_context, predict, train, EntityInContext, Model, TrainConfig, Trainer,
};
use crate::corpus::{corpus_fingerprint, Corpus, Label, LabeledEntity, Provenance, Review};
use crate::error::{Error, Result};
use crate::pseudo::PseudoSet;

/// Everything a protocol run needs besides the data.
#[derive(Clone, Copy)]
pub struct EvalSettings<'a> {
    pub trainer: &'a dyn Trainer,
    pub config: &'a TrainConfig,
    pub k: usize,
    pub seed: u64,
    /// Pseudo entities below this confidence are not trained on.
    pub confidence_floor: f64,
    /// Start augmented training from these weights instead of scratch.
    pub init: Option<&'a dyn Model>,
}

impl<'a> EvalSettings<'a> {
    pub fn new(trainer: &'a dyn Trainer, config: &'a TrainConfig, k: usize, seed: u64) -> Self {
        EvalSettings {
            trainer,
            config,
            k,
            seed,
            confidence_floor: 0.0,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_gold: usize,
    pub train_pseudo: usize,
    pub test_reviews: usize,
    pub test_entities: usize,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProvenanceBreakdown {
    pub gold: usize,
    pub pseudo: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub source: String,
    pub target: String,
    pub model: String,
    pub k: usize,
    pub seed: u64,
    pub per_fold: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
    /// Mean over evaluated folds; `None` when every fold was skipped.
    pub averaged: Option<MetricsRecord>,
    pub config_digest: String,
    pub provenance_breakdown: ProvenanceBreakdown,
}

/// Review ids on each side of one fold, for leakage checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldTrace {
    pub fold: usize,
    pub train_review_ids: BTreeSet<String>,
    pub test_review_ids: BTreeSet<String>,
}

fn digest(parts: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(parts).expect("json value serializes");
    hex::encode(Sha256::digest(bytes))
}

fn contexts<'a>(
    entities: impl IntoIterator<Item = &'a LabeledEntity>,
    lookup: &dyn Fn(&str) -> Option<&'a Review>,
    config: &TrainConfig,
) -> Result<Vec<(EntityInContext, Label)>> {
    entities
        .into_iter()
        .map(|e| {
            let review = lookup(e.review_id()).ok_or_else(|| {
                Error::Integrity(format!("no review text for entity in {}", e.review_id()))
            })?;
            Ok((make_context(review, &e.span, config.window)?, e.label))
        })
        .collect()
}

fn evaluate(
    model: &dyn Model,
    test: &[&LabeledEntity],
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<MetricsRecord> {
    let lookup = |id: &str| corpus.review(id);
    let examples: Vec<EntityInContext> = contexts(test.iter().copied(), &lookup, config)?
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    let predictions = predict(model, &examples)?;
    let gold: Vec<LabeledEntity> = test.iter().map(|e| (*e).clone()).collect();
    compute_metrics(&gold, &predictions)
}

fn single_class(examples: &[(EntityInContext, Label)]) -> Option<String> {
    let adr = examples.iter().filter(|(_, l)| *l == Label::Adr).count();
    if adr == 0 || adr == examples.len() {
        Some(format!(
            "training split is single-class ({adr} ADR of {} entities)",
            examples.len()
        ))
    } else {
        None
    }
}

enum FoldOutcome {
    Done(FoldResult),
    Skipped(SkippedFold),
}

fn assemble(
    header: EvalReport,
    outcomes: Vec<(FoldOutcome, FoldTrace)>,
) -> (EvalReport, Vec<FoldTrace>) {
    let mut report = header;
    let mut traces = Vec::new();
    for (outcome, trace) in outcomes {
        match outcome {
            FoldOutcome::Done(r) => report.per_fold.push(r),
            FoldOutcome::Skipped(s) => {
                warn!("fold {} skipped: {}", s.fold, s.reason);
                report.skipped.push(s);
            }
        }
        traces.push(trace);
    }
    let metrics: Vec<MetricsRecord> = report.per_fold.iter().map(|f| f.metrics.clone()).collect();
    report.averaged = MetricsRecord::average(&metrics);
    (report, traces)
}

pub fn run_in_dataset(corpus: &Corpus, settings: &EvalSettings<'_>) -> Result<EvalReport> {
    run_in_dataset_traced(corpus, settings).map(|(r, _)| r)
}

/// Trains on k-1 folds of `corpus` and tests on the held-out fold.
pub fn run_in_dataset_traced(
    corpus: &Corpus,
    settings: &EvalSettings<'_>,
) -> Result<(EvalReport, Vec<FoldTrace>)> {
    settings.config.validate()?;
    let folds = make_folds(corpus, settings.k, settings.seed)?;
    let config = settings.config;
    let lookup = |id: &str| corpus.review(id);

    let outcomes: Vec<(FoldOutcome, FoldTrace)> = (0..settings.k)
        .into_par_iter()
        .map(|fold| -> Result<_> {
            let (test, train_set): (Vec<&LabeledEntity>, Vec<&LabeledEntity>) = corpus
                .entities()
                .iter()
                .partition(|e| folds.fold_of(e.review_id()) == Some(fold));
            let trace = fold_trace(&folds, fold, corpus.reviews().keys().cloned().collect());
            let examples = contexts(train_set.iter().copied(), &lookup, config)?;
            if let Some(reason) = single_class(&examples) {
                return Ok((FoldOutcome::Skipped(SkippedFold { fold, reason }), trace));
            }
            if test.is_empty() {
                let reason = "test fold has no entities".to_string();
                return Ok((FoldOutcome::Skipped(SkippedFold { fold, reason }), trace));
            }
            let model = train(settings.trainer, config, &examples, None)?;
            let metrics = evaluate(model.as_ref(), &test, corpus, config)?;
            let result = FoldResult {
                fold,
                train_gold: examples.len(),
                train_pseudo: 0,
                test_reviews: trace.test_review_ids.len(),
                test_entities: test.len(),
                metrics,
            };
            Ok((FoldOutcome::Done(result), trace))
        })
        .collect::<Result<_>>()?;

    let header = EvalReport {
        protocol: "in-dataset".into(),
        source: corpus.name().to_string(),
        target: corpus.name().to_string(),
        model: settings.trainer.name().to_string(),
        k: settings.k,
        seed: settings.seed,
        per_fold: Vec::new(),
        skipped: Vec::new(),
        averaged: None,
        config_digest: digest(&serde_json::json!({
            "protocol": "in-dataset",
            "corpus": corpus_fingerprint(corpus),
            "model": settings.trainer.name(),
            "config": config,
            "k": settings.k,
            "seed": settings.seed,
        })),
        provenance_breakdown: ProvenanceBreakdown {
            gold: corpus.entities().len(),
            pseudo: 0,
        },
    };
    Ok(assemble(header, outcomes))
}

fn fold_trace(folds: &FoldAssignment, fold: usize, train_ids: BTreeSet<String>) -> FoldTrace {
    let test_review_ids: BTreeSet<String> =
        folds.members(fold).into_iter().map(String::from).collect();
    FoldTrace {
        fold,
        train_review_ids: train_ids.difference(&test_review_ids).cloned().collect(),
        test_review_ids,
    }
}

pub fn run_out_of_dataset(
    source: &Corpus,
    target: &Corpus,
    augmentation: Option<&PseudoSet>,
    settings: &EvalSettings<'_>,
) -> Result<EvalReport> {
    run_out_of_dataset_traced(source, target, augmentation, settings).map(|(r, _)| r)
}

/// Trains on all of `source` (plus pseudo entities) and tests on each
/// fold of `target`.
///
/// Pseudo entities from a review whose id or exact text occurs in the
/// test fold are withheld for that fold; folds with nothing withheld
/// share one model.
pub fn run_out_of_dataset_traced(
    source: &Corpus,
    target: &Corpus,
    augmentation: Option<&PseudoSet>,
    settings: &EvalSettings<'_>,
) -> Result<(EvalReport, Vec<FoldTrace>)> {
    settings.config.validate()?;
    if let Some(shared) = source
        .reviews()
        .keys()
        .find(|id| target.review(id).is_some())
    {
        return Err(Error::Config(format!(
            "source {} and target {} share review id {shared}",
            source.name(),
            target.name()
        )));
    }
    if let Some(aug) = augmentation {
        if aug.source_corpus == target.name() {
            return Err(Error::Provenance(format!(
                "pseudo labels come from a model trained on the target corpus {}",
                target.name()
            )));
        }
        if let Some(e) = aug
            .entities
            .iter()
            .find(|e| e.provenance != Provenance::Pseudo)
        {
            return Err(Error::Provenance(format!(
                "augmentation holds a {:?} entity in {}",
                e.provenance,
                e.review_id()
            )));
        }
    }
    let folds = make_folds(target, settings.k, settings.seed)?;
    let config = settings.config;

    let pseudo_reviews: HashMap<&str, &Review> = augmentation
        .map(|a| a.reviews.iter().map(|r| (r.id.as_str(), r)).collect())
        .unwrap_or_default();
    let pseudo: Vec<&LabeledEntity> = augmentation
        .map(|a| {
            a.entities
                .iter()
                .filter(|e| e.confidence.is_some_and(|c| c >= settings.confidence_floor))
                .collect()
        })
        .unwrap_or_default();
    let lookup = |id: &str| {
        source
            .review(id)
            .or_else(|| pseudo_reviews.get(id).copied())
    };

    let gold_examples = contexts(source.entities(), &lookup, config)?;
    let pseudo_examples = contexts(pseudo.iter().copied(), &lookup, config)?;

    let withheld: Vec<HashSet<usize>> = (0..settings.k)
        .map(|fold| {
            let test_ids = folds.members(fold);
            let test_texts: HashSet<&str> = test_ids
                .iter()
                .filter_map(|id| target.review(id))
                .map(|r| r.text.as_str())
                .collect();
            pseudo
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    test_ids.contains(e.review_id())
                        || pseudo_reviews
                            .get(e.review_id())
                            .is_some_and(|r| test_texts.contains(r.text.as_str()))
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let training_set = |skip: &HashSet<usize>| -> Vec<(EntityInContext, Label)> {
        gold_examples
            .iter()
            .cloned()
            .chain(
                pseudo_examples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !skip.contains(i))
                    .map(|(_, ex)| ex.clone()),
            )
            .collect()
    };

    let shared_model: Option<Box<dyn Model>> = if withheld.iter().any(HashSet::is_empty) {
        let examples = training_set(&HashSet::new());
        match single_class(&examples) {
            Some(_) => None,
            None => Some(train(settings.trainer, config, &examples, settings.init)?),
        }
    } else {
        None
    };

    let source_ids: BTreeSet<String> = source.reviews().keys().cloned().collect();
    let outcomes: Vec<(FoldOutcome, FoldTrace)> = (0..settings.k)
        .into_par_iter()
        .map(|fold| -> Result<_> {
            let skip = &withheld[fold];
            let mut train_ids = source_ids.clone();
            for (i, e) in pseudo.iter().enumerate() {
                if !skip.contains(&i) {
                    train_ids.insert(e.review_id().to_string());
                }
            }
            let test_review_ids: BTreeSet<String> =
                folds.members(fold).into_iter().map(String::from).collect();
            let trace = FoldTrace {
                fold,
                train_review_ids: train_ids,
                test_review_ids,
            };
            let test: Vec<&LabeledEntity> = target
                .entities()
                .iter()
                .filter(|e| folds.fold_of(e.review_id()) == Some(fold))
                .collect();
            let examples_len = gold_examples.len() + pseudo_examples.len() - skip.len();

            let owned;
            let model: &dyn Model = if skip.is_empty() {
                match &shared_model {
                    Some(m) => m.as_ref(),
                    None => {
                        let reason = single_class(&training_set(skip)).unwrap_or_default();
                        return Ok((FoldOutcome::Skipped(SkippedFold { fold, reason }), trace));
                    }
                }
            } else {
                let examples = training_set(skip);
                if let Some(reason) = single_class(&examples) {
                    return Ok((FoldOutcome::Skipped(SkippedFold { fold, reason }), trace));
                }
                owned = train(settings.trainer, config, &examples, settings.init)?;
                owned.as_ref()
            };
            if test.is_empty() {
                let reason = "test fold has no entities".to_string();
                return Ok((FoldOutcome::Skipped(SkippedFold { fold, reason }), trace));
            }
            let metrics = evaluate(model, &test, target, config)?;
            let result = FoldResult {
                fold,
                train_gold: gold_examples.len(),
                train_pseudo: examples_len - gold_examples.len(),
                test_reviews: trace.test_review_ids.len(),
                test_entities: test.len(),
                metrics,
            };
            Ok((FoldOutcome::Done(result), trace))
        })
        .collect::<Result<_>>()?;

    let aug_digest = augmentation.map(|a| {
        serde_json::json!({
            "strategy": a.strategy,
            "source_model_id": a.source_model_id,
            "source_corpus": a.source_corpus,
            "review_count": a.review_count,
            "entity_count": a.entities.len(),
            "adr_count": a.adr_count(),
        })
    });
    let header = EvalReport {
        protocol: "out-of-dataset".into(),
        source: source.name().to_string(),
        target: target.name().to_string(),
        model: settings.trainer.name().to_string(),
        k: settings.k,
        seed: settings.seed,
        per_fold: Vec::new(),
        skipped: Vec::new(),
        averaged: None,
        config_digest: digest(&serde_json::json!({
            "protocol": "out-of-dataset",
            "source": corpus_fingerprint(source),
            "target": corpus_fingerprint(target),
            "augmentation": aug_digest,
            "confidence_floor": settings.confidence_floor,
            "warm_start": settings.init.map(|m| m.id().to_string()),
            "model": settings.trainer.name(),
            "config": config,
            "k": settings.k,
            "seed": settings.seed,
        })),
        provenance_breakdown: ProvenanceBreakdown {
            gold: gold_examples.len(),
            pseudo: pseudo_examples.len(),
        },
    };
    Ok(assemble(header, outcomes))
}
