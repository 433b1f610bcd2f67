//! Pseudo-annotation of raw reviews and training-set augmentation.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{make_context, predict, Model, Window};
use crate::corpus::{
    read_corpus_file, write_corpus_file, Corpus, Label, LabeledEntity, Provenance, Review,
};
use crate::error::{Error, Result};
use crate::ner::{check_spans, Tagger};
use crate::text::normalize_drug;

/// The only rating `MinRating` keeps.
pub const MIN_RATING: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SelectionStrategy {
    Full,
    TargetDrugs { drugs: BTreeSet<String> },
    MinRating,
}

impl SelectionStrategy {
    pub fn target_drugs<I, S>(drugs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let strategy = SelectionStrategy::TargetDrugs {
            drugs: drugs
                .into_iter()
                .map(|d| normalize_drug(d.as_ref()))
                .collect(),
        };
        strategy.validate()?;
        Ok(strategy)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SelectionStrategy::TargetDrugs { drugs } if drugs.is_empty() => Err(Error::Config(
                "TargetDrugs needs a non-empty drug set".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn admits(&self, review: &Review) -> bool {
        match self {
            SelectionStrategy::Full => true,
            SelectionStrategy::TargetDrugs { drugs } => drugs.contains(&review.drug),
            SelectionStrategy::MinRating => review.rating == Some(MIN_RATING),
        }
    }

    /// Subset name as used in result tables.
    pub fn subset_name(&self) -> &'static str {
        match self {
            SelectionStrategy::Full => "AskaPatient_full",
            SelectionStrategy::TargetDrugs { .. } => "AskaPatient_target",
            SelectionStrategy::MinRating => "AskaPatient_1",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.subset_name())
    }
}

/// Filters `reviews` by `strategy`, preserving order.
pub fn select(reviews: &[Review], strategy: &SelectionStrategy) -> Result<Vec<Review>> {
    strategy.validate()?;
    Ok(reviews
        .iter()
        .filter(|r| strategy.admits(r))
        .cloned()
        .collect())
}

/// Reviews excluded from pseudo-annotation because they duplicate gold data.
#[derive(Debug, Clone, Default)]
pub struct DedupPolicy {
    ids: HashSet<String>,
    texts: HashSet<String>,
}

impl DedupPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    /// Excludes any review sharing an id or exact text with `corpora`.
    pub fn against(corpora: &[&Corpus]) -> Self {
        let mut policy = Self::default();
        for c in corpora {
            for r in c.reviews().values() {
                policy.ids.insert(r.id.clone());
                policy.texts.insert(r.text.clone());
            }
        }
        policy
    }

    pub fn admits(&self, review: &Review) -> bool {
        !self.ids.contains(&review.id) && !self.texts.contains(&review.text)
    }
}

#[derive(Debug, Clone)]
pub struct PseudoOptions {
    pub window: Window,
    /// Keep only reviews with at least one ADR prediction.
    pub adr_texts_only: bool,
    /// Name of the gold corpus the tagger and model were built from.
    pub source_corpus: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSet {
    pub strategy: SelectionStrategy,
    pub entities: Vec<LabeledEntity>,
    /// The annotated reviews, including those that yielded no entity.
    pub reviews: Vec<Review>,
    pub source_model_id: String,
    pub source_corpus: String,
    pub review_count: usize,
}

impl PseudoSet {
    pub fn adr_count(&self) -> usize {
        self.entities
            .iter()
            .filter(|e| e.label == Label::Adr)
            .count()
    }

    pub fn as_corpus(&self) -> Result<Corpus> {
        Corpus::new(
            format!("pseudo-{}", self.strategy.subset_name()),
            self.reviews.clone(),
            self.entities.clone(),
        )
    }
}

const CHUNK: usize = 256;

/// Tags, contextualizes and classifies every admitted review.
///
/// Both labels are kept; each entity carries its ADR score as confidence.
/// Chunks run in parallel and are merged in input order.
pub fn pseudo_annotate(
    tagger: &dyn Tagger,
    model: &dyn Model,
    reviews: &[Review],
    dedup: &DedupPolicy,
    strategy: &SelectionStrategy,
    options: &PseudoOptions,
) -> Result<PseudoSet> {
    let admitted: Vec<Review> = reviews
        .iter()
        .filter(|r| dedup.admits(r))
        .cloned()
        .collect();
    let chunks: Vec<Vec<(Review, Vec<LabeledEntity>)>> = admitted
        .par_chunks(CHUNK)
        .map(|chunk| annotate_chunk(tagger, model, chunk, options.window))
        .collect::<Result<_>>()?;

    let mut kept_reviews = Vec::new();
    let mut entities = Vec::new();
    for (review, found) in chunks.into_iter().flatten() {
        if options.adr_texts_only && !found.iter().any(|e| e.label == Label::Adr) {
            continue;
        }
        kept_reviews.push(review);
        entities.extend(found);
    }
    Ok(PseudoSet {
        strategy: strategy.clone(),
        review_count: kept_reviews.len(),
        entities,
        reviews: kept_reviews,
        source_model_id: model.id().to_string(),
        source_corpus: options.source_corpus.clone(),
    })
}

fn annotate_chunk(
    tagger: &dyn Tagger,
    model: &dyn Model,
    chunk: &[Review],
    window: Window,
) -> Result<Vec<(Review, Vec<LabeledEntity>)>> {
    let spans = tagger.tag_all(chunk)?;
    let mut contexts = Vec::new();
    for (review, found) in chunk.iter().zip(&spans) {
        check_spans(review, found)?;
        for span in found {
            contexts.push(make_context(review, span, window)?);
        }
    }
    let mut predictions = predict(model, &contexts)?.into_iter();
    Ok(chunk
        .iter()
        .zip(&spans)
        .map(|(review, found)| {
            let entities = predictions
                .by_ref()
                .take(found.len())
                .map(|p| LabeledEntity::pseudo(p.span, p.label, p.score))
                .collect();
            (review.clone(), entities)
        })
        .collect())
}

/// Gold entities plus pseudo entities whose confidence reaches `floor`.
pub fn augment(gold: &[LabeledEntity], pseudo: &PseudoSet, floor: f64) -> Vec<LabeledEntity> {
    gold.iter()
        .cloned()
        .chain(
            pseudo
                .entities
                .iter()
                .filter(|e| e.confidence.is_some_and(|c| c >= floor))
                .cloned(),
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoManifest {
    pub strategy: SelectionStrategy,
    pub source_model_id: String,
    pub source_corpus: String,
    pub seed: u64,
    pub review_count: usize,
    pub entity_count: usize,
    pub adr_count: usize,
}

pub const PSEUDO_ENTITIES_FILE: &str = "pseudo.jsonl";
pub const PSEUDO_MANIFEST_FILE: &str = "pseudo_manifest.json";

/// Writes `pseudo.jsonl` and `pseudo_manifest.json` under `dir`.
pub fn write_pseudo_set(set: &PseudoSet, seed: u64, dir: &Path) -> Result<PseudoManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_corpus_file(&set.as_corpus()?, &dir.join(PSEUDO_ENTITIES_FILE))?;
    let manifest = PseudoManifest {
        strategy: set.strategy.clone(),
        source_model_id: set.source_model_id.clone(),
        source_corpus: set.source_corpus.clone(),
        seed,
        review_count: set.review_count,
        entity_count: set.entities.len(),
        adr_count: set.adr_count(),
    };
    let path = dir.join(PSEUDO_MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_pseudo_set(dir: &Path) -> Result<(PseudoSet, PseudoManifest)> {
    let path = dir.join(PSEUDO_MANIFEST_FILE);
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: PseudoManifest = serde_json::from_str(&raw)?;
    let corpus = read_corpus_file(&dir.join(PSEUDO_ENTITIES_FILE))?;
    if corpus
        .entities()
        .iter()
        .any(|e| e.provenance != Provenance::Pseudo)
    {
        return Err(Error::Provenance(format!(
            "{} holds non-pseudo entities",
            dir.display()
        )));
    }
    let set = PseudoSet {
        strategy: manifest.strategy.clone(),
        entities: corpus.entities().to_vec(),
        reviews: corpus.reviews().values().cloned().collect(),
        source_model_id: manifest.source_model_id.clone(),
        source_corpus: manifest.source_corpus.clone(),
        review_count: corpus.reviews().len(),
    };
    if set.review_count != manifest.review_count || set.entities.len() != manifest.entity_count {
        return Err(Error::Integrity(format!(
            "{}: manifest counts disagree with {PSEUDO_ENTITIES_FILE}",
            dir.display()
        )));
    }
    Ok((set, manifest))
}
