//! Acceptance runner: prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Real corpora are used when these variables point at them:
//! `ADR_CADEC_DIR`, `ADR_PSYTAR_ANNOTATIONS`, `ADR_PSYTAR_POSTS`,
//! `ADR_ASKAPATIENT_REVIEWS`. Otherwise the bundled synthetic fixtures are used.

mod support;

use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use adr_pseudo::corpus::{
    load_cadec, load_psytar, load_reviews, review_stats, Corpus, Label, Review,
};
use adr_pseudo::experiment::{run_experiment, ExperimentConfig, REPORT_FILE, SUMMARY_FILE};
use adr_pseudo::harness::MetricsRecord;
use adr_pseudo::pseudo::{select, SelectionStrategy};
use adr_pseudo::synthetic::counts;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

struct RealData {
    cadec: Option<PathBuf>,
    psytar: Option<(PathBuf, PathBuf)>,
    reviews: Option<PathBuf>,
}

impl RealData {
    fn from_env() -> Self {
        RealData {
            cadec: env_path("ADR_CADEC_DIR"),
            psytar: env_path("ADR_PSYTAR_ANNOTATIONS").zip(env_path("ADR_PSYTAR_POSTS")),
            reviews: env_path("ADR_ASKAPATIENT_REVIEWS"),
        }
    }
}

fn expect(failures: &mut Vec<String>, what: &str, got: usize, want: usize) {
    if got != want {
        failures.push(format!("{what} {got} != {want}"));
    }
}

fn adr_count(corpus: &Corpus) -> usize {
    corpus
        .entities()
        .iter()
        .filter(|e| e.label == Label::Adr)
        .count()
}

fn count(reviews: &[Review], strategy: &SelectionStrategy) -> Result<usize, String> {
    select(reviews, strategy)
        .map(|v| v.len())
        .map_err(|e| e.to_string())
}

struct SubsetCounts {
    reviews: usize,
    drugs: usize,
    min_rating: usize,
    source_drugs: usize,
    target_drugs: usize,
    min_rating_target: usize,
    min_rating_source: usize,
}

fn subset_counts(raw: &[Review], source: &Corpus, target: &Corpus) -> Result<SubsetCounts, String> {
    let min = select(raw, &SelectionStrategy::MinRating).map_err(|e| e.to_string())?;
    let by = |c: &Corpus| {
        SelectionStrategy::target_drugs(c.drugs().iter().cloned()).map_err(|e| e.to_string())
    };
    let (s, t) = (by(source)?, by(target)?);
    Ok(SubsetCounts {
        reviews: raw.len(),
        drugs: review_stats("raw", raw).drug_count,
        min_rating: min.len(),
        source_drugs: count(raw, &s)?,
        target_drugs: count(raw, &t)?,
        min_rating_target: count(&min, &t)?,
        min_rating_source: count(&min, &s)?,
    })
}

fn criterion_1(real: &RealData) -> Outcome {
    let mut failures = Vec::new();
    let mut used = Vec::new();
    let cadec = match &real.cadec {
        Some(dir) => {
            let c = load_cadec(dir).map_err(|e| e.to_string())?;
            expect(&mut failures, "CADEC entities", c.entities().len(), 6320);
            expect(&mut failures, "CADEC ADR", adr_count(&c), 5770);
            used.push("CADEC");
            c
        }
        None => {
            let c = load_cadec(&fixtures().join("cadec_like")).map_err(|e| e.to_string())?;
            expect(
                &mut failures,
                "cadec_like reviews",
                c.reviews().len(),
                counts::CADEC_LIKE_REVIEWS,
            );
            expect(
                &mut failures,
                "cadec_like entities",
                c.entities().len(),
                counts::CADEC_LIKE_ENTITIES,
            );
            expect(
                &mut failures,
                "cadec_like ADR",
                adr_count(&c),
                counts::CADEC_LIKE_ADR,
            );
            c
        }
    };
    let psytar = match &real.psytar {
        Some((ann, posts)) => {
            let load = load_psytar(ann, posts).map_err(|e| e.to_string())?;
            expect(
                &mut failures,
                "PsyTAR posts",
                load.corpus.reviews().len(),
                887,
            );
            expect(
                &mut failures,
                "PsyTAR entities",
                load.corpus.entities().len(),
                7415,
            );
            used.push("PsyTAR");
            load.corpus
        }
        None => {
            let dir = fixtures().join("psytar_like");
            let load = load_psytar(&dir.join("annotations.csv"), &dir.join("posts.csv"))
                .map_err(|e| e.to_string())?;
            expect(
                &mut failures,
                "psytar_like posts",
                load.corpus.reviews().len(),
                counts::PSYTAR_LIKE_POSTS,
            );
            expect(
                &mut failures,
                "psytar_like entities",
                load.corpus.entities().len(),
                counts::PSYTAR_LIKE_ENTITIES,
            );
            expect(
                &mut failures,
                "psytar_like ADR",
                adr_count(&load.corpus),
                counts::PSYTAR_LIKE_ADR,
            );
            expect(
                &mut failures,
                "psytar_like skipped rows",
                load.skipped.len(),
                counts::PSYTAR_LIKE_SKIPPED,
            );
            load.corpus
        }
    };
    let all_real = real.reviews.is_some() && real.cadec.is_some() && real.psytar.is_some();
    if all_real {
        let raw = load_reviews(real.reviews.as_ref().unwrap()).map_err(|e| e.to_string())?;
        let c = subset_counts(&raw, &cadec, &psytar)?;
        expect(&mut failures, "reviews", c.reviews, 113_836);
        expect(&mut failures, "drugs", c.drugs, 1_593);
        expect(&mut failures, "MinRating", c.min_rating, 35_712);
        expect(&mut failures, "CADEC-drug reviews", c.source_drugs, 173);
        expect(&mut failures, "PsyTAR-drug reviews", c.target_drugs, 6_590);
        expect(
            &mut failures,
            "MinRating with PsyTAR drugs",
            c.min_rating_target,
            1_307,
        );
        expect(
            &mut failures,
            "MinRating with CADEC drugs",
            c.min_rating_source,
            0,
        );
        used.push("reviews");
    } else {
        let raw = load_reviews(&fixtures().join("askapatient.csv")).map_err(|e| e.to_string())?;
        let source = load_cadec(&fixtures().join("cadec_like")).map_err(|e| e.to_string())?;
        let dir = fixtures().join("psytar_like");
        let target = load_psytar(&dir.join("annotations.csv"), &dir.join("posts.csv"))
            .map_err(|e| e.to_string())?
            .corpus;
        let c = subset_counts(&raw, &source, &target)?;
        expect(&mut failures, "raw reviews", c.reviews, counts::RAW_REVIEWS);
        expect(&mut failures, "raw drugs", c.drugs, counts::RAW_DRUGS);
        expect(
            &mut failures,
            "MinRating",
            c.min_rating,
            counts::RAW_MIN_RATING,
        );
        expect(
            &mut failures,
            "source-drug reviews",
            c.source_drugs,
            counts::RAW_SOURCE_DRUG_REVIEWS,
        );
        expect(
            &mut failures,
            "target-drug reviews",
            c.target_drugs,
            counts::RAW_TARGET_DRUG_REVIEWS,
        );
        expect(
            &mut failures,
            "MinRating with target drugs",
            c.min_rating_target,
            counts::RAW_MIN_RATING_TARGET_DRUGS,
        );
        expect(
            &mut failures,
            "MinRating with source drugs",
            c.min_rating_source,
            counts::RAW_MIN_RATING_SOURCE_DRUGS,
        );
    }
    let source = if used.is_empty() {
        "synthetic fixtures".to_string()
    } else {
        format!("real {}; synthetic for the rest", used.join(", "))
    };
    if failures.is_empty() {
        Ok(format!("{source}: all counts match"))
    } else {
        Err(format!("{source}: {}", failures.join("; ")))
    }
}

/// Finds a small confusion matrix whose ADR F and macro F round to the
/// published pair, then scores it with the metric code to read off NonADR F.
fn table_one_non_adr_f() -> Option<f64> {
    use Label::*;
    let f = |agree: usize, errors: usize| 2.0 * agree as f64 / (2 * agree + errors) as f64;
    for errors in 1..200usize {
        for tp in 1..40 * errors {
            if (f(tp, errors) - 0.969).abs() >= 5e-4 {
                continue;
            }
            for tn in 1..3 * errors {
                if ((f(tp, errors) + f(tn, errors)) / 2.0 - 0.815).abs() >= 5e-4 {
                    continue;
                }
                let fp = errors / 2;
                let mut pairs = vec![(Adr, Adr); tp];
                pairs.extend(vec![(NonAdr, Adr); fp]);
                pairs.extend(vec![(Adr, NonAdr); errors - fp]);
                pairs.extend(vec![(NonAdr, NonAdr); tn]);
                let m = MetricsRecord::from_pairs(&pairs);
                if (m.class(Adr).f1 - 0.969).abs() < 5e-4 && (m.macro_avg.f1 - 0.815).abs() < 5e-4 {
                    return Some(m.class(NonAdr).f1);
                }
            }
        }
    }
    None
}

fn criterion_2() -> Outcome {
    panic::catch_unwind(|| support::metrics_against_oracle(1000))
        .map_err(|_| "compute_metrics disagrees with the brute-force counter".to_string())?;
    let derived: f64 = 2.0 * 0.815 - 0.969;
    let found =
        table_one_non_adr_f().ok_or("no confusion matrix reproduces ADR F .969 / macro F .815")?;
    if (found - 0.661).abs() <= 0.005 && (derived - 0.661).abs() <= 0.005 {
        Ok(format!(
            "1000 random instances agree within 1e-9; NonADR F for ADR F .969 and macro F .815 = {found:.3}"
        ))
    } else {
        Err(format!("NonADR F {found:.3} not within 0.005 of 0.661"))
    }
}

fn fixture_config(name: &str, out: &Path) -> Result<ExperimentConfig, String> {
    let mut c = ExperimentConfig::from_file(&fixtures().join(format!("{name}.toml")))
        .map_err(|e| e.to_string())?;
    c.output_dir = out.to_path_buf();
    Ok(c)
}

fn macro_f(config: &ExperimentConfig) -> Result<f64, String> {
    let (report, _) = run_experiment(config).map_err(|e| e.to_string())?;
    report
        .averaged
        .map(|m| m.rounded().macro_avg.f1)
        .ok_or_else(|| {
            format!(
                "every fold skipped for {} -> {}",
                report.source, report.target
            )
        })
}

fn criterion_3() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for name in ["in_dataset", "shift_target_drugs"] {
        let dirs = [
            tmp.path().join(format!("{name}-a")),
            tmp.path().join(format!("{name}-b")),
        ];
        for d in &dirs {
            run_experiment(&fixture_config(name, d)?).map_err(|e| e.to_string())?;
        }
        for file in [REPORT_FILE, SUMMARY_FILE] {
            let a = fs::read(dirs[0].join(file)).map_err(|e| e.to_string())?;
            let b = fs::read(dirs[1].join(file)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{name}/{file} differs between identical runs"));
            }
        }
    }
    Ok("report.json and summary.csv byte-identical across reruns of two configs".into())
}

fn criterion_4() -> Outcome {
    let results = support::run_all(256);
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let worst = support::gradient_check(200);
    if !failed.is_empty() {
        return Err(failed.join("; "));
    }
    if worst >= 1e-5 {
        return Err(format!("gradient relative error {worst:e} >= 1e-5"));
    }
    Ok(format!(
        "{} properties hold; gradient relative error {worst:.1e}",
        results.len()
    ))
}

fn criterion_5() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inside = macro_f(&fixture_config("in_dataset", &tmp.path().join("in"))?)?;
    let transfer = macro_f(&fixture_config("transfer", &tmp.path().join("tr"))?)?;
    let line = format!("in-dataset macro F {inside:.3}, transfer macro F {transfer:.3}");
    if inside == 1.0 && transfer == 1.0 {
        Ok(line)
    } else {
        Err(line)
    }
}

struct Pair {
    label: &'static str,
    a: String,
    b: String,
    base: PathBuf,
    extra: &'static str,
}

fn corpus_toml(role: &str, spec: &str) -> String {
    spec.replace("ROLE", role)
}

fn gap_pair(pair: &Pair, seed: u64, out: &Path) -> Result<(f64, f64, f64, f64), String> {
    let config = |body: String, dir: &str| -> Result<ExperimentConfig, String> {
        let text = format!(
            "{body}{}seed = {seed}\noutput_dir = {:?}\n",
            pair.extra,
            out.join(dir)
        );
        ExperimentConfig::from_toml(&text, &pair.base).map_err(|e| e.to_string())
    };
    let a_src = corpus_toml("source", &pair.a);
    let b_src = corpus_toml("source", &pair.b);
    let in_a = macro_f(&config(a_src.clone(), "in_a")?)?;
    let in_b = macro_f(&config(b_src.clone(), "in_b")?)?;
    let a_to_b = macro_f(&config(
        format!("{a_src}{}", corpus_toml("target", &pair.b)),
        "a_b",
    )?)?;
    let b_to_a = macro_f(&config(
        format!("{b_src}{}", corpus_toml("target", &pair.a)),
        "b_a",
    )?)?;
    Ok((in_a, in_b, a_to_b, b_to_a))
}

fn criterion_6(real: &RealData) -> Outcome {
    let pair = match (&real.cadec, &real.psytar) {
        (Some(cadec), Some((ann, posts))) => Pair {
            label: "real CADEC/PsyTAR",
            a: format!("ROLE_corpus = {cadec:?}\nROLE_format = \"cadec\"\n"),
            b: format!("ROLE_corpus = {ann:?}\nROLE_format = \"psytar\"\nROLE_posts = {posts:?}\n"),
            base: PathBuf::new(),
            extra: "",
        },
        _ => Pair {
            label: "synthetic shift fixture",
            a: "ROLE_corpus = \"cadec_like\"\nROLE_format = \"cadec\"\n".into(),
            b: "ROLE_corpus = \"psytar_like/annotations.csv\"\nROLE_format = \"psytar\"\nROLE_posts = \"psytar_like/posts.csv\"\n"
                .into(),
            base: fixtures(),
            extra: "window = 3\n",
        },
    };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in [42u64, 43, 44] {
        let (in_a, in_b, a_to_b, b_to_a) =
            gap_pair(&pair, seed, &tmp.path().join(seed.to_string()))?;
        let ok = in_b - a_to_b >= 0.03 && in_a - b_to_a >= 0.03;
        passed += usize::from(ok);
        lines.push(format!(
            "seed {seed}: in(B) {in_b:.3} vs A->B {a_to_b:.3}, in(A) {in_a:.3} vs B->A {b_to_a:.3}{}",
            if ok { "" } else { " (gap < 0.03)" }
        ));
    }
    let line = format!("{}: {passed}/3 seeds; {}", pair.label, lines.join("; "));
    if passed >= 2 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let score = |name: &str| -> Result<f64, String> {
        macro_f(&fixture_config(name, &tmp.path().join(name))?)
    };
    let none = score("shift_none")?;
    let mut failures = Vec::new();
    let mut parts = vec![format!("none {none:.3}")];
    for (name, strategy) in [
        ("shift_full", "Full"),
        ("shift_target_drugs", "TargetDrugs"),
        ("shift_min_rating", "MinRating"),
    ] {
        let f = score(name)?;
        parts.push(format!("{strategy} {f:.3}"));
        if f < none - 0.01 {
            failures.push(format!("{strategy} lowers macro F by {:.3}", none - f));
        }
        if strategy == "TargetDrugs" && f <= none {
            failures.push("TargetDrugs does not improve macro F".into());
        }
    }
    let line = parts.join(", ");
    if failures.is_empty() {
        Ok(line)
    } else {
        Err(format!("{line}: {}", failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let real = RealData::from_env();
    let criteria: Vec<(u8, Box<dyn Fn() -> Outcome>)> = vec![
        (1, Box::new(|| criterion_1(&real))),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| criterion_6(&real))),
        (7, Box::new(criterion_7)),
    ];
    let mut all_ok = true;
    for (n, check) in &criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                all_ok = false;
                println!("criterion {n}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
