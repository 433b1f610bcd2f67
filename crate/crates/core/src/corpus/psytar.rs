//! Loader for the phrase-level PsyTAR export.
//!
//! Two delimited files are read: annotations (`post_id`, `drug`,
//! `entity_type`, `phrase`, optionally `start`/`end`) and post texts
//! (`post_id`, `drug`, `text`, optionally `rating`). Header names are
//! matched case-insensitively and the delimiter (tab or comma) is taken
//! from the header row.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, EntitySpan, Fragment, Label, LabeledEntity, Review};
use crate::error::{Error, Result};

pub fn map_psytar_type(tag: &str) -> Option<Label> {
    match tag {
        "ADR" => Some(Label::Adr),
        "WD" | "DI" | "SSI" => Some(Label::NonAdr),
        _ => None,
    }
}

/// An annotation row that could not be placed in its post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub post_id: String,
    pub phrase: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PsytarLoad {
    pub corpus: Corpus,
    pub skipped: Vec<SkippedRow>,
}

pub(crate) fn open_delimited(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_reader(file))
}

struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Columns(
            headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_lowercase(), i))
                .collect(),
        )
    }

    fn require(&self, name: &str, file: &Path) -> Result<usize> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("{}: missing column {name:?}", file.display())))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }
}

pub fn load_psytar(annotations: &Path, posts: &Path) -> Result<PsytarLoad> {
    let reviews = read_posts(posts)?;
    let by_id: HashMap<&str, &Review> = reviews.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut reader = open_delimited(annotations)?;
    let cols = Columns::new(reader.headers()?);
    let c_post = cols.require("post_id", annotations)?;
    let c_type = cols.require("entity_type", annotations)?;
    let c_phrase = cols.require("phrase", annotations)?;
    let c_start = cols.optional("start");
    let c_end = cols.optional("end");

    let mut unknown = BTreeSet::new();
    let mut skipped = Vec::new();
    let mut entities = Vec::new();
    let mut claimed: HashMap<(String, String), Vec<usize>> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let post_id = record.get(c_post).unwrap_or_default().trim().to_string();
        let tag = record.get(c_type).unwrap_or_default().trim();
        let phrase = record.get(c_phrase).unwrap_or_default().trim().to_string();
        let Some(label) = map_psytar_type(tag) else {
            unknown.insert(tag.to_string());
            continue;
        };
        let skip = |reason: &str| SkippedRow {
            row,
            post_id: post_id.clone(),
            phrase: phrase.clone(),
            reason: reason.to_string(),
        };
        let Some(review) = by_id.get(post_id.as_str()) else {
            skipped.push(skip("post text missing"));
            continue;
        };

        let explicit = match (c_start, c_end) {
            (Some(s), Some(e)) => {
                let s = record.get(s).unwrap_or_default().trim();
                let e = record.get(e).unwrap_or_default().trim();
                if s.is_empty() || e.is_empty() {
                    None
                } else {
                    let parse = |v: &str| {
                        v.parse::<usize>().map_err(|_| Error::Value {
                            row,
                            message: format!("bad offset {v:?}"),
                        })
                    };
                    Some(Fragment::new(parse(s)?, parse(e)?))
                }
            }
            _ => None,
        };

        let fragment = match explicit {
            Some(f) => f,
            None => {
                if phrase.is_empty() {
                    skipped.push(skip("empty phrase"));
                    continue;
                }
                let hits = find_all_caseless(&review.text, &phrase);
                if hits.is_empty() {
                    skipped.push(skip("phrase not found in post"));
                    continue;
                }
                let used = claimed
                    .entry((post_id.clone(), phrase.to_lowercase()))
                    .or_default();
                let start = hits
                    .iter()
                    .copied()
                    .find(|h| !used.contains(h))
                    .unwrap_or(hits[0]);
                used.push(start);
                Fragment::new(start, start + phrase.chars().count())
            }
        };
        let span = EntitySpan::from_review(review, vec![fragment])?;
        entities.push(LabeledEntity::gold(span, label, Some(tag.to_string())));
    }

    if !unknown.is_empty() {
        return Err(Error::UnknownEntityType(unknown.into_iter().collect()));
    }
    let name = annotations
        .canonicalize()
        .ok()
        .and_then(|p| {
            p.parent()
                .and_then(|d| d.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "psytar".to_string());
    Ok(PsytarLoad {
        corpus: Corpus::new(name, reviews, entities)?,
        skipped,
    })
}

fn read_posts(path: &Path) -> Result<Vec<Review>> {
    let mut reader = open_delimited(path)?;
    let cols = Columns::new(reader.headers()?);
    let c_id = cols.require("post_id", path)?;
    let c_drug = cols.require("drug", path)?;
    let c_text = cols.require("text", path)?;
    let c_rating = cols.optional("rating");
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let rating = match c_rating.and_then(|c| record.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(v) => Some(v.parse::<u8>().map_err(|_| Error::Value {
                row: i + 1,
                message: format!("bad rating {v:?}"),
            })?),
        };
        out.push(Review::new(
            record.get(c_id).unwrap_or_default().trim(),
            record.get(c_drug).unwrap_or_default(),
            rating,
            record.get(c_text).unwrap_or_default(),
        )?);
    }
    Ok(out)
}

/// Code-point offsets of every case-insensitive occurrence of `needle`.
fn find_all_caseless(haystack: &str, needle: &str) -> Vec<usize> {
    let fold = |c: char| c.to_lowercase().collect::<String>();
    let hay: Vec<String> = haystack.chars().map(fold).collect();
    let pat: Vec<String> = needle.chars().map(fold).collect();
    if pat.is_empty() || pat.len() > hay.len() {
        return Vec::new();
    }
    (0..=hay.len() - pat.len())
        .filter(|&i| hay[i..i + pat.len()] == pat[..])
        .collect()
}
