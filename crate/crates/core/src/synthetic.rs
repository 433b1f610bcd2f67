//! Deterministic synthetic corpora in the on-disk input formats.
//!
//! * `cadec_like/`: 40 standoff reviews (ARTHROTEC, LIPITOR). The entity
//!   surface determines the label.
//! * `transfer_target/`: 30 standoff reviews (VOLTAREN, CRESTOR) with the
//!   same phrase vocabulary and different wording.
//! * `psytar_like/`: 40 phrase-annotated posts (ZOLOFT, LEXAPRO) with a
//!   disjoint phrase vocabulary and different local context.
//! * `askapatient.csv`: 200 raw reviews. Target-drug reviews use the
//!   `psytar_like` wording around `cadec_like` phrases, so a tagger built
//!   from `cadec_like` finds them and pseudo labels carry the target
//!   wording.

use std::fs;
use std::path::Path;

use crate::corpus::{write_reviews_file, Review};
use crate::error::{Error, Result};

pub const SOURCE_ADR: [&str; 4] = ["nausea", "muscle cramps", "stomach pain", "dizziness"];
pub const SOURCE_NON_ADR: [&str; 4] = ["arthritis", "high cholesterol", "knee injury", "migraine"];
pub const TARGET_ADR: [&str; 4] = ["weight gain", "insomnia", "brain zaps", "night sweats"];
pub const TARGET_NON_ADR: [&str; 4] = ["depression", "anxiety", "panic attacks", "ocd"];

const SOURCE_DRUGS: [&str; 2] = ["Arthrotec", "Lipitor"];
const TRANSFER_DRUGS: [&str; 2] = ["Voltaren", "Crestor"];
const TARGET_DRUGS: [&str; 2] = ["Zoloft", "Lexapro"];
const NON_ADR_TYPES_CADEC: [&str; 3] = ["Disease", "Symptom", "Finding"];
const NON_ADR_TYPES_PSYTAR: [&str; 3] = ["DI", "SSI", "WD"];
const WEEKS: [&str; 3] = ["two", "three", "four"];

/// Published sizes of the generated fixtures.
pub mod counts {
    pub const CADEC_LIKE_REVIEWS: usize = 40;
    /// One non-ADR and two ADR entities per review; drug mentions dropped.
    pub const CADEC_LIKE_ENTITIES: usize = 120;
    pub const CADEC_LIKE_ADR: usize = 80;
    pub const TRANSFER_TARGET_REVIEWS: usize = 30;
    pub const PSYTAR_LIKE_POSTS: usize = 40;
    pub const PSYTAR_LIKE_ENTITIES: usize = 120;
    pub const PSYTAR_LIKE_ADR: usize = 80;
    pub const PSYTAR_LIKE_SKIPPED: usize = 1;
    pub const RAW_REVIEWS: usize = 200;
    pub const RAW_DRUGS: usize = 30;
    pub const RAW_MIN_RATING: usize = 38;
    pub const RAW_SOURCE_DRUG_REVIEWS: usize = 10;
    pub const RAW_TARGET_DRUG_REVIEWS: usize = 60;
    pub const RAW_MIN_RATING_TARGET_DRUGS: usize = 12;
    pub const RAW_MIN_RATING_SOURCE_DRUGS: usize = 0;
}

struct Placed {
    tag: &'static str,
    start: usize,
    end: usize,
    surface: String,
}

/// Fills `{name}` placeholders of `template`, recording each filled span.
///
/// Placeholders without a tag in `slots` are left untouched.
fn fill(template: &str, slots: &[(&str, &'static str, &str)]) -> (String, Vec<Placed>) {
    let mut text = String::new();
    let mut placed = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("closed placeholder");
        let name = &rest[open + 1..close];
        let (_, tag, value) = slots
            .iter()
            .find(|(n, _, _)| *n == name)
            .unwrap_or_else(|| panic!("no value for {{{name}}}"));
        let start = text.chars().count();
        text.push_str(value);
        if !tag.is_empty() {
            placed.push(Placed {
                tag,
                start,
                end: start + value.chars().count(),
                surface: value.to_string(),
            });
        }
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    placed.sort_by_key(|p| p.start);
    (text, placed)
}

fn standoff(placed: &[Placed]) -> String {
    placed
        .iter()
        .enumerate()
        .map(|(i, p)| {
            format!(
                "T{}\t{} {} {}\t{}\n",
                i + 1,
                p.tag,
                p.start,
                p.end,
                p.surface
            )
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_standoff_corpus(dir: &Path, n: usize, drugs: &[&str], templates: &[&str]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..n {
        let drug = drugs[i % drugs.len()];
        let template = templates[(i / 4) % templates.len()];
        let (text, placed) = fill(
            template,
            &[
                ("drug", "Drug", drug),
                ("non", NON_ADR_TYPES_CADEC[i % 3], SOURCE_NON_ADR[i % 4]),
                ("w", "", WEEKS[i % 3]),
                ("adr1", "ADR", SOURCE_ADR[i % 4]),
                ("adr2", "ADR", SOURCE_ADR[(i + 1) % 4]),
            ],
        );
        let stem = format!("{}.{i}", drug.to_uppercase());
        write(&dir.join(format!("{stem}.txt")), &text)?;
        write(&dir.join(format!("{stem}.ann")), &standoff(&placed))?;
    }
    Ok(())
}

const SOURCE_TEMPLATES: [&str; 4] = [
    "I took {drug} for {non} and after {w} weeks I got {adr1} and {adr2} badly",
    "{drug} was prescribed when my {non} flared up then {w} weeks later {adr1} started with {adr2} too",
    "Been on {drug} {w} weeks to treat {non} and the side effects were {adr1} and {adr2} mostly",
    "My doctor said {drug} would help the {non} but within {w} weeks came {adr1} with {adr2} daily",
];
const TRANSFER_TEMPLATES: [&str; 1] =
    ["Using {drug} for {non} these {w} weeks; got {adr1} plus {adr2}."];
const TARGET_TEMPLATE: &str = "Started {drug} because of {non}; it gave me {adr1}, also {adr2}.";
const NEUTRAL_TEMPLATE: &str =
    "{drug} review. {adr1} hit me hard, {adr2} too, and {non} did not improve.";

fn target_text(drug: &str, non: &str, adr1: &str, adr2: &str) -> (String, Vec<Placed>) {
    fill(
        TARGET_TEMPLATE,
        &[
            ("drug", "Drug", drug),
            ("non", "NON", non),
            ("adr1", "ADR", adr1),
            ("adr2", "ADR", adr2),
        ],
    )
}

fn write_psytar_like(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut posts = csv::Writer::from_writer(Vec::new());
    posts.write_record(["post_id", "drug", "rating", "text"])?;
    let mut ann = csv::Writer::from_writer(Vec::new());
    ann.write_record(["post_id", "drug", "entity_type", "phrase"])?;
    for i in 0..counts::PSYTAR_LIKE_POSTS {
        let drug = TARGET_DRUGS[i % 2];
        let id = format!("psy{i:03}");
        let adr1 = if i % 7 == 0 {
            capitalize(TARGET_ADR[i % 4])
        } else {
            TARGET_ADR[i % 4].to_string()
        };
        let (text, _) = target_text(drug, TARGET_NON_ADR[i % 4], &adr1, TARGET_ADR[(i + 1) % 4]);
        let rating = (i % 5 + 1).to_string();
        posts.write_record([id.as_str(), drug, rating.as_str(), text.as_str()])?;
        ann.write_record([
            id.as_str(),
            drug,
            NON_ADR_TYPES_PSYTAR[i % 3],
            TARGET_NON_ADR[i % 4],
        ])?;
        ann.write_record([id.as_str(), drug, "ADR", TARGET_ADR[i % 4]])?;
        ann.write_record([id.as_str(), drug, "ADR", TARGET_ADR[(i + 1) % 4]])?;
        if i == 5 {
            ann.write_record([id.as_str(), drug, "ADR", "hair loss"])?;
        }
    }
    let finish = |w: csv::Writer<Vec<u8>>| {
        String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
    };
    write(&dir.join("posts.csv"), &finish(posts))?;
    write(&dir.join("annotations.csv"), &finish(ann))?;
    Ok(())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// The raw review collection.
pub fn raw_reviews() -> Vec<Review> {
    let mut out = Vec::new();
    let mut push = |id: String, drug: &str, rating: u8, text: String| {
        out.push(Review::new(id, drug, Some(rating), text).expect("valid synthetic review"));
    };
    for i in 0..counts::RAW_TARGET_DRUG_REVIEWS {
        let drug = TARGET_DRUGS[i % 2];
        let (text, _) = target_text(
            drug,
            SOURCE_NON_ADR[(i / 2) % 4],
            SOURCE_ADR[i % 4],
            SOURCE_ADR[(i + 3) % 4],
        );
        push(format!("ap-t{i:03}"), drug, (i % 5 + 1) as u8, text);
    }
    for i in 0..counts::RAW_SOURCE_DRUG_REVIEWS {
        let drug = SOURCE_DRUGS[i % 2];
        let (text, _) = fill(
            SOURCE_TEMPLATES[i % 4],
            &[
                ("drug", "", drug),
                ("non", "", SOURCE_NON_ADR[(i + 2) % 4]),
                ("w", "", WEEKS[(i + 1) % 3]),
                ("adr1", "", SOURCE_ADR[(i + 2) % 4]),
                ("adr2", "", SOURCE_ADR[(i + 1) % 4]),
            ],
        );
        push(format!("ap-s{i:03}"), drug, (i % 4 + 2) as u8, text);
    }
    for i in 0..130 {
        let drug = format!("Drug{:02}", i % 26 + 1);
        let (text, _) = fill(
            NEUTRAL_TEMPLATE,
            &[
                ("drug", "", &drug),
                ("adr1", "", SOURCE_ADR[i % 4]),
                ("adr2", "", SOURCE_ADR[(i + 2) % 4]),
                ("non", "", SOURCE_NON_ADR[(i / 3) % 4]),
            ],
        );
        push(format!("ap-o{i:03}"), &drug, (i % 5 + 1) as u8, text);
    }
    out
}

/// Writes every fixture under `dir`.
pub fn write_fixtures(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_standoff_corpus(
        &dir.join("cadec_like"),
        counts::CADEC_LIKE_REVIEWS,
        &SOURCE_DRUGS,
        &SOURCE_TEMPLATES,
    )?;
    write_standoff_corpus(
        &dir.join("transfer_target"),
        counts::TRANSFER_TARGET_REVIEWS,
        &TRANSFER_DRUGS,
        &TRANSFER_TEMPLATES,
    )?;
    write_psytar_like(&dir.join("psytar_like"))?;
    write_reviews_file(&raw_reviews(), &dir.join("askapatient.csv"))
}
