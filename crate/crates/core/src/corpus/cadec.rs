//! Standoff (`.txt` / `.ann`) loader for CADEC-style directories.

use std::fs;
use std::path::Path;

use super::{Corpus, EntitySpan, Fragment, Label, LabeledEntity, Review};
use crate::error::{Error, Result};
use crate::text::collapse_whitespace;

/// Harmonized label for a CADEC entity type; `Ok(None)` drops the annotation.
pub fn map_cadec_type(tag: &str) -> Result<Option<Label>> {
    match tag {
        "ADR" => Ok(Some(Label::Adr)),
        "Disease" | "Symptom" | "Finding" => Ok(Some(Label::NonAdr)),
        "Drug" => Ok(None),
        other => Err(Error::UnknownEntityType(vec![other.to_string()])),
    }
}

#[derive(Debug, PartialEq)]
struct AnnLine<'a> {
    tag: &'a str,
    fragments: Vec<Fragment>,
    surface: &'a str,
}

/// Loads every `<name>.txt` / `<name>.ann` pair under `dir`.
///
/// The official layout with `text/` and `original/` subdirectories is
/// also accepted. Review ids are file stems; the drug is the stem prefix
/// before the first `.`.
pub fn load_cadec(dir: &Path) -> Result<Corpus> {
    let (text_dir, ann_dir) = if dir.join("text").is_dir() && dir.join("original").is_dir() {
        (dir.join("text"), dir.join("original"))
    } else {
        (dir.to_path_buf(), dir.to_path_buf())
    };
    let mut stems: Vec<String> = fs::read_dir(&text_dir)
        .map_err(|e| Error::io(&text_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();

    let mut reviews = Vec::with_capacity(stems.len());
    let mut entities = Vec::new();
    for stem in &stems {
        let text_path = text_dir.join(format!("{stem}.txt"));
        let ann_path = ann_dir.join(format!("{stem}.ann"));
        let text = fs::read_to_string(&text_path).map_err(|e| Error::io(&text_path, e))?;
        let ann = fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
        let drug = stem.split('.').next().unwrap_or(stem);
        let review = Review::new(stem.clone(), drug, None, text)?;
        entities.extend(parse_ann(&review, &ann, &ann_path)?);
        reviews.push(review);
    }
    let name = dir
        .file_name()
        .map_or_else(|| "cadec".to_string(), |n| n.to_string_lossy().into_owned());
    Corpus::new(name, reviews, entities)
}

fn parse_ann(review: &Review, ann: &str, path: &Path) -> Result<Vec<LabeledEntity>> {
    let mut out = Vec::new();
    for (lineno, line) in ann.lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        // Only text-bound annotations (T*) carry spans.
        if !line.starts_with('T') {
            continue;
        }
        let parsed = parse_ann_line(line).map_err(parse_err)?;
        let Some(label) = map_cadec_type(parsed.tag)? else {
            continue;
        };
        let span = EntitySpan::from_review(review, parsed.fragments)?;
        if collapse_whitespace(&span.surface) != collapse_whitespace(parsed.surface) {
            return Err(Error::SurfaceMismatch {
                review_id: review.id.clone(),
                annotated: parsed.surface.to_string(),
                sliced: span.surface,
            });
        }
        out.push(LabeledEntity::gold(
            span,
            label,
            Some(parsed.tag.to_string()),
        ));
    }
    Ok(out)
}

/// Parses `T1<TAB>ADR 9 15;20 26<TAB>nausea cramps`.
///
/// Space-separated lines are accepted too; the offset list then ends at
/// the first end offset not followed by `;`.
fn parse_ann_line(line: &str) -> Result<AnnLine<'_>, String> {
    let fields: Vec<&str> = line.splitn(3, '\t').collect();
    if fields.len() == 3 {
        let mut head = fields[1].splitn(2, ' ');
        let tag = head
            .next()
            .filter(|t| !t.is_empty())
            .ok_or("missing entity type")?;
        let offsets = head.next().ok_or("missing offsets")?;
        let mut fragments = Vec::new();
        for range in offsets.split(';') {
            let mut nums = range.split_whitespace();
            let (Some(s), Some(e), None) = (nums.next(), nums.next(), nums.next()) else {
                return Err(format!("malformed offset range {range:?}"));
            };
            fragments.push(Fragment::new(parse_offset(s)?, parse_offset(e)?));
        }
        return Ok(AnnLine {
            tag,
            fragments,
            surface: fields[2],
        });
    }

    let mut rest = line;
    next_word(&mut rest).ok_or("empty line")?;
    let tag = next_word(&mut rest).ok_or("missing entity type")?;
    let mut fragments = Vec::new();
    let mut start = parse_offset(next_word(&mut rest).ok_or("missing start offset")?)?;
    loop {
        let word = next_word(&mut rest).ok_or("missing end offset")?;
        match word.split_once(';') {
            Some((end, next_start)) => {
                fragments.push(Fragment::new(start, parse_offset(end)?));
                start = parse_offset(next_start)?;
            }
            None => {
                fragments.push(Fragment::new(start, parse_offset(word)?));
                break;
            }
        }
    }
    Ok(AnnLine {
        tag,
        fragments,
        surface: rest.trim_start(),
    })
}

fn next_word<'a>(rest: &mut &'a str) -> Option<&'a str> {
    let trimmed = rest.trim_start();
    if trimmed.is_empty() {
        return None;
    }
    let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
    let (word, tail) = trimmed.split_at(end);
    *rest = tail;
    Some(word)
}

fn parse_offset(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("bad offset {s:?}"))
}
