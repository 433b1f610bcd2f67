//! Canonical interchange format: JSON Lines, one record per review with
//! its entity list.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, LabeledEntity, Review};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub drug: String,
    pub rating: Option<u8>,
    pub text: String,
    pub entities: Vec<LabeledEntity>,
}

pub fn write_corpus<W: Write>(corpus: &Corpus, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let grouped = corpus.entities_by_review();
    for review in corpus.reviews().values() {
        let record = CorpusRecord {
            id: review.id.clone(),
            drug: review.drug.clone(),
            rating: review.rating,
            text: review.text.clone(),
            entities: grouped
                .get(review.id.as_str())
                .map(|es| es.iter().map(|e| (*e).clone()).collect())
                .unwrap_or_default(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    out.flush().map_err(|e| Error::io("<corpus>", e))
}

pub fn read_corpus<R: Read>(name: &str, input: R) -> Result<Corpus> {
    let mut reviews = Vec::new();
    let mut entities = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: name.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        reviews.push(Review {
            id: record.id,
            drug: record.drug,
            rating: record.rating,
            text: record.text,
        });
        entities.extend(record.entities);
    }
    Corpus::new(name, reviews, entities)
}

pub fn write_corpus_file(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(corpus, file)
}

/// Reads a `.jsonl` corpus; the corpus takes the file stem as its name.
pub fn read_corpus_file(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map_or_else(
        || "corpus".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    read_corpus(&name, file)
}
