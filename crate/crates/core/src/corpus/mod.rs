//! Canonical data model for annotated and raw review collections.

mod cadec;
mod interchange;
mod psytar;
mod reviews;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::CharIndex;

pub use cadec::{load_cadec, map_cadec_type};
pub use interchange::{
    read_corpus, read_corpus_file, write_corpus, write_corpus_file, CorpusRecord,
};
pub use psytar::{load_psytar, map_psytar_type, PsytarLoad, SkippedRow};
pub use reviews::{load_reviews, read_reviews, write_reviews, write_reviews_file};

/// One user post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub drug: String,
    pub rating: Option<u8>,
    pub text: String,
}

impl Review {
    /// Builds a review with a normalized drug name, checking the id and rating.
    pub fn new(
        id: impl Into<String>,
        drug: &str,
        rating: Option<u8>,
        text: impl Into<String>,
    ) -> Result<Self> {
        let review = Review {
            id: id.into(),
            drug: crate::text::normalize_drug(drug),
            rating,
            text: text.into(),
        };
        review.check()?;
        Ok(review)
    }

    fn check(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Integrity("review id is empty".into()));
        }
        if let Some(r) = self.rating {
            if !(1..=5).contains(&r) {
                return Err(Error::Integrity(format!(
                    "review {}: rating {r} outside 1..=5",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Half-open code-point range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
}

impl Fragment {
    pub fn new(start: usize, end: usize) -> Self {
        Fragment { start, end }
    }
}

impl From<(usize, usize)> for Fragment {
    fn from((start, end): (usize, usize)) -> Self {
        Fragment { start, end }
    }
}

impl From<Fragment> for (usize, usize) {
    fn from(f: Fragment) -> Self {
        (f.start, f.end)
    }
}

/// A possibly discontinuous span inside a review.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub review_id: String,
    pub fragments: Vec<Fragment>,
    pub surface: String,
}

impl EntitySpan {
    /// Slices `review` at `fragments` and joins the pieces with one space.
    pub fn from_review(review: &Review, fragments: Vec<Fragment>) -> Result<Self> {
        let surface = slice_fragments(&review.id, &review.text, &fragments)?;
        Ok(EntitySpan {
            review_id: review.id.clone(),
            fragments,
            surface,
        })
    }

    pub fn start(&self) -> usize {
        self.fragments.first().map_or(0, |f| f.start)
    }

    pub fn end(&self) -> usize {
        self.fragments.last().map_or(0, |f| f.end)
    }

    pub fn is_contiguous(&self) -> bool {
        self.fragments.len() == 1
    }

    /// Checks fragment ordering, bounds and the surface against `review`.
    pub fn verify(&self, review: &Review) -> Result<()> {
        if self.review_id != review.id {
            return Err(Error::Integrity(format!(
                "span for {} checked against review {}",
                self.review_id, review.id
            )));
        }
        let sliced = slice_fragments(&review.id, &review.text, &self.fragments)?;
        if sliced != self.surface {
            return Err(Error::SurfaceMismatch {
                review_id: review.id.clone(),
                annotated: self.surface.clone(),
                sliced,
            });
        }
        Ok(())
    }
}

fn slice_fragments(review_id: &str, text: &str, fragments: &[Fragment]) -> Result<String> {
    if fragments.is_empty() {
        return Err(Error::Integrity(format!(
            "{review_id}: span has no fragments"
        )));
    }
    let index = CharIndex::new(text);
    let mut pieces = Vec::with_capacity(fragments.len());
    let mut prev_end = 0;
    for (i, f) in fragments.iter().enumerate() {
        if f.start >= f.end {
            return Err(Error::Integrity(format!(
                "{review_id}: empty or inverted fragment {}..{}",
                f.start, f.end
            )));
        }
        if i > 0 && f.start < prev_end {
            return Err(Error::Integrity(format!(
                "{review_id}: fragments unsorted or overlapping at {}..{}",
                f.start, f.end
            )));
        }
        let piece = index.slice(f.start, f.end).ok_or_else(|| {
            Error::Integrity(format!(
                "{review_id}: fragment {}..{} outside text of length {}",
                f.start,
                f.end,
                index.len()
            ))
        })?;
        pieces.push(piece);
        prev_end = f.end;
    }
    Ok(pieces.join(" "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ADR")]
    Adr,
    #[serde(rename = "NonADR")]
    NonAdr,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Adr, Label::NonAdr];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Adr => "ADR",
            Label::NonAdr => "NonADR",
        }
    }

    pub fn from_score(score: f64) -> Label {
        if score >= 0.5 {
            Label::Adr
        } else {
            Label::NonAdr
        }
    }

    pub fn target(self) -> f64 {
        match self {
            Label::Adr => 1.0,
            Label::NonAdr => 0.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Gold,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntity {
    pub span: EntitySpan,
    pub label: Label,
    pub provenance: Provenance,
    pub confidence: Option<f64>,
    pub original_type: Option<String>,
}

impl LabeledEntity {
    pub fn gold(span: EntitySpan, label: Label, original_type: Option<String>) -> Self {
        LabeledEntity {
            span,
            label,
            provenance: Provenance::Gold,
            confidence: None,
            original_type,
        }
    }

    pub fn pseudo(span: EntitySpan, label: Label, confidence: f64) -> Self {
        LabeledEntity {
            span,
            label,
            provenance: Provenance::Pseudo,
            confidence: Some(confidence),
            original_type: None,
        }
    }

    pub fn review_id(&self) -> &str {
        &self.span.review_id
    }

    fn check_provenance(&self) -> Result<()> {
        match (self.provenance, self.confidence) {
            (Provenance::Gold, None) => Ok(()),
            (Provenance::Pseudo, Some(c)) if (0.0..=1.0).contains(&c) => Ok(()),
            (p, c) => Err(Error::Integrity(format!(
                "{}: {p:?} entity with confidence {c:?}",
                self.span.review_id
            ))),
        }
    }
}

/// Named collection of reviews and their labeled entities.
///
/// Construction validates every invariant; the value is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    reviews: BTreeMap<String, Review>,
    entities: Vec<LabeledEntity>,
    drugs: BTreeSet<String>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        reviews: Vec<Review>,
        mut entities: Vec<LabeledEntity>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for review in reviews {
            review.check()?;
            let id = review.id.clone();
            if map.insert(id.clone(), review).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        for entity in &entities {
            let review = map.get(entity.review_id()).ok_or_else(|| {
                Error::Integrity(format!(
                    "entity {:?} references unknown review {}",
                    entity.span.surface,
                    entity.review_id()
                ))
            })?;
            entity.span.verify(review)?;
            entity.check_provenance()?;
        }
        entities.sort_by(|a, b| {
            (a.review_id(), &a.span.fragments).cmp(&(b.review_id(), &b.span.fragments))
        });
        let drugs = map.values().map(|r| r.drug.clone()).collect();
        Ok(Corpus {
            name: name.into(),
            reviews: map,
            entities,
            drugs,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Corpus {
            name: name.into(),
            reviews: BTreeMap::new(),
            entities: Vec::new(),
            drugs: BTreeSet::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn reviews(&self) -> &BTreeMap<String, Review> {
        &self.reviews
    }

    pub fn review(&self, id: &str) -> Option<&Review> {
        self.reviews.get(id)
    }

    pub fn entities(&self) -> &[LabeledEntity] {
        &self.entities
    }

    pub fn drugs(&self) -> &BTreeSet<String> {
        &self.drugs
    }

    /// Entities grouped by review id, in canonical order.
    pub fn entities_by_review(&self) -> BTreeMap<&str, Vec<&LabeledEntity>> {
        let mut out: BTreeMap<&str, Vec<&LabeledEntity>> = BTreeMap::new();
        for e in &self.entities {
            out.entry(e.review_id()).or_default().push(e);
        }
        out
    }

    pub fn texts(&self) -> HashSet<&str> {
        self.reviews.values().map(|r| r.text.as_str()).collect()
    }
}

/// SHA-256 over the canonical serialization, prefixed by the name.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    use sha2::{Digest, Sha256};
    let mut bytes = Vec::new();
    write_corpus(corpus, &mut bytes).expect("in-memory write");
    format!("{}:{}", corpus.name, hex::encode(Sha256::digest(&bytes)))
}

/// Counts used to check a loaded corpus against its published size.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub name: String,
    pub review_count: usize,
    pub entity_count: usize,
    pub adr_count: usize,
    pub non_adr_count: usize,
    pub per_original_type: BTreeMap<String, usize>,
    pub drug_count: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> StatsRecord {
    let mut stats = StatsRecord {
        name: corpus.name.clone(),
        review_count: corpus.reviews.len(),
        entity_count: corpus.entities.len(),
        drug_count: corpus.drugs.len(),
        ..Default::default()
    };
    for e in &corpus.entities {
        match e.label {
            Label::Adr => stats.adr_count += 1,
            Label::NonAdr => stats.non_adr_count += 1,
        }
        if let Some(t) = &e.original_type {
            *stats.per_original_type.entry(t.clone()).or_default() += 1;
        }
    }
    stats
}

/// Stats for a raw review list (no entities).
pub fn review_stats(name: &str, reviews: &[Review]) -> StatsRecord {
    StatsRecord {
        name: name.to_string(),
        review_count: reviews.len(),
        drug_count: reviews
            .iter()
            .map(|r| r.drug.as_str())
            .collect::<HashSet<_>>()
            .len(),
        ..Default::default()
    }
}
