//! Raw review collections (`review_id,drug,rating,text`).

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Review;
use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["review_id", "drug", "rating", "text"];

pub fn load_reviews(path: &Path) -> Result<Vec<Review>> {
    let reader = super::psytar::open_delimited(path)?;
    parse(reader)
}

/// Reads comma-delimited reviews from any reader.
pub fn read_reviews<R: Read>(input: R) -> Result<Vec<Review>> {
    parse(csv::Reader::from_reader(input))
}

fn parse<R: Read>(mut reader: csv::Reader<R>) -> Result<Vec<Review>> {
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let mut idx = [0usize; 4];
    for (slot, col) in idx.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|h| *h == col)
            .ok_or_else(|| Error::Schema(format!("missing column {col:?}")))?;
    }
    if let Some(extra) = names.iter().find(|h| !COLUMNS.contains(h)) {
        return Err(Error::Schema(format!("unexpected column {extra:?}")));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |k: usize| record.get(idx[k]).unwrap_or_default();
        let id = field(0).trim().to_string();
        if id.is_empty() {
            return Err(Error::Value {
                row,
                message: "empty review_id".into(),
            });
        }
        let rating = match field(2).trim() {
            "" => None,
            v => match v.parse::<u8>() {
                Ok(r) if (1..=5).contains(&r) => Some(r),
                _ => {
                    return Err(Error::Value {
                        row,
                        message: format!("rating {v:?} outside 1..=5"),
                    })
                }
            },
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        out.push(Review::new(id, field(1), rating, field(3))?);
    }
    Ok(out)
}

pub fn write_reviews<W: Write>(reviews: &[Review], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS)?;
    for r in reviews {
        let rating = r.rating.map(|v| v.to_string()).unwrap_or_default();
        writer.write_record([r.id.as_str(), &r.drug, &rating, &r.text])?;
    }
    writer.flush().map_err(|e| Error::io("<reviews>", e))?;
    Ok(())
}

pub fn write_reviews_file(reviews: &[Review], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_reviews(reviews, file)
}
