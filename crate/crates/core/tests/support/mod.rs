#![allow(dead_code)]
//! Property checks shared by the property suite and the acceptance runner.

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use adr_pseudo::classifier::{
    make_context, predict, LogisticTrainer, Prediction, TrainConfig, Window,
};
use adr_pseudo::corpus::{
    read_corpus, read_reviews, write_corpus, write_reviews, Corpus, EntitySpan, Fragment, Label,
    LabeledEntity, Review,
};
use adr_pseudo::harness::{
    compute_metrics, make_folds_for, run_in_dataset_traced, EvalSettings, MetricsRecord,
};
use adr_pseudo::ner::{build_gazetteer, Tagger};
use adr_pseudo::pseudo::{
    augment, pseudo_annotate, select, DedupPolicy, PseudoOptions, PseudoSet, SelectionStrategy,
};
use adr_pseudo::text::tokenize;

const WORDS: [&str; 12] = [
    "i", "had", "bad", "nausea", "muscle", "cramps", "and", "pain", "today", ",", ".", "knee",
];
const DRUGS: [&str; 4] = ["Lipitor", "Zoloft", "Arthrotec", "Voltaren"];

pub fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Adr), Just(Label::NonAdr)]
}

pub fn reviews_strategy() -> impl Strategy<Value = Vec<Review>> {
    prop::collection::vec(
        (
            0..DRUGS.len(),
            prop::option::of(1u8..=5),
            prop::collection::vec(0..WORDS.len(), 1..12),
        ),
        0..30,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (d, rating, words))| {
                let text: Vec<&str> = words.iter().map(|&w| WORDS[w]).collect();
                Review::new(format!("r{i:03}"), DRUGS[d], rating, text.join(" ")).unwrap()
            })
            .collect()
    })
}

pub fn strategy_strategy() -> impl Strategy<Value = SelectionStrategy> {
    prop_oneof![
        Just(SelectionStrategy::Full),
        Just(SelectionStrategy::MinRating),
        prop::sample::subsequence(DRUGS.to_vec(), 1..=DRUGS.len())
            .prop_map(|d| SelectionStrategy::target_drugs(d).unwrap()),
    ]
}

/// Reviews plus non-overlapping token-aligned entities, some discontinuous.
pub fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    (
        reviews_strategy(),
        prop::collection::vec((any::<u64>(), label_strategy()), 0..60),
    )
        .prop_map(|(reviews, picks)| {
            let mut used: HashMap<String, BTreeSet<usize>> = HashMap::new();
            let mut entities = Vec::new();
            for (i, (roll, label)) in picks.into_iter().enumerate() {
                if reviews.is_empty() {
                    break;
                }
                let review = &reviews[(roll as usize) % reviews.len()];
                let tokens = tokenize(&review.text);
                let start = ((roll >> 8) as usize) % tokens.len();
                let len = 1 + ((roll >> 16) as usize) % 2;
                let gap = (roll >> 24) % 3 == 0;
                let mut picked = vec![start];
                if len == 2 {
                    let next = if gap { start + 2 } else { start + 1 };
                    if next < tokens.len() {
                        picked.push(next);
                    }
                }
                let taken = used.entry(review.id.clone()).or_default();
                let lo = picked[0];
                let hi = *picked.last().unwrap();
                if (lo..=hi).any(|t| taken.contains(&t)) {
                    continue;
                }
                taken.extend(lo..=hi);
                let fragments = if picked.len() == 2 && hi == lo + 1 {
                    vec![Fragment::new(tokens[lo].start, tokens[hi].end)]
                } else {
                    picked
                        .iter()
                        .map(|&t| Fragment::new(tokens[t].start, tokens[t].end))
                        .collect()
                };
                let span = EntitySpan::from_review(review, fragments).unwrap();
                let original = if i % 2 == 0 {
                    Some("ADR".to_string())
                } else {
                    None
                };
                entities.push(LabeledEntity::gold(span, label, original));
            }
            Corpus::new("prop", reviews, entities).unwrap()
        })
}

fn ids(reviews: &[Review]) -> Vec<String> {
    reviews.iter().map(|r| r.id.clone()).collect()
}

pub fn full_selection_is_identity_input() -> impl Strategy<Value = Vec<Review>> {
    reviews_strategy()
}

pub fn full_selection_is_identity(reviews: Vec<Review>) -> Result<(), TestCaseError> {
    prop_assert_eq!(select(&reviews, &SelectionStrategy::Full).unwrap(), reviews);
    Ok(())
}

pub fn selection_is_idempotent_input() -> impl Strategy<Value = (Vec<Review>, SelectionStrategy)> {
    (reviews_strategy(), strategy_strategy())
}

pub fn selection_is_idempotent(
    (reviews, s): (Vec<Review>, SelectionStrategy),
) -> Result<(), TestCaseError> {
    let once = select(&reviews, &s).unwrap();
    prop_assert_eq!(select(&once, &s).unwrap(), once.clone());
    prop_assert!(once.iter().all(|r| s.admits(r)));
    Ok(())
}

pub fn selections_commute_input(
) -> impl Strategy<Value = (Vec<Review>, SelectionStrategy, SelectionStrategy)> {
    (reviews_strategy(), strategy_strategy(), strategy_strategy())
}

pub fn selections_commute(
    (reviews, a, b): (Vec<Review>, SelectionStrategy, SelectionStrategy),
) -> Result<(), TestCaseError> {
    let ab = select(&select(&reviews, &a).unwrap(), &b).unwrap();
    let ba = select(&select(&reviews, &b).unwrap(), &a).unwrap();
    prop_assert_eq!(ids(&ab), ids(&ba));
    Ok(())
}

pub fn augment_conserves_gold_input() -> impl Strategy<Value = (Corpus, Vec<f64>, f64)> {
    (
        corpus_strategy(),
        prop::collection::vec(0.0f64..1.0, 0..40),
        0.0f64..1.0,
    )
}

pub fn augment_conserves_gold(
    (corpus, confidences, floor): (Corpus, Vec<f64>, f64),
) -> Result<(), TestCaseError> {
    let gold = corpus.entities().to_vec();
    let pseudo_entities: Vec<LabeledEntity> = gold
        .iter()
        .zip(&confidences)
        .map(|(g, &c)| LabeledEntity::pseudo(g.span.clone(), Label::from_score(c), c))
        .collect();
    let set = PseudoSet {
        strategy: SelectionStrategy::Full,
        entities: pseudo_entities.clone(),
        reviews: corpus.reviews().values().cloned().collect(),
        source_model_id: "m".into(),
        source_corpus: "s".into(),
        review_count: corpus.reviews().len(),
    };
    let out = augment(&gold, &set, floor);
    prop_assert_eq!(&out[..gold.len()], &gold[..]);
    let expected: Vec<&LabeledEntity> = pseudo_entities
        .iter()
        .filter(|e| e.confidence.unwrap() >= floor)
        .collect();
    let got: Vec<&LabeledEntity> = out[gold.len()..].iter().collect();
    prop_assert_eq!(got, expected);
    Ok(())
}

pub fn gazetteer_spans_are_sorted_disjoint_and_cover_training_entities_input(
) -> impl Strategy<Value = Corpus> {
    corpus_strategy()
}

pub fn gazetteer_spans_are_sorted_disjoint_and_cover_training_entities(
    corpus: Corpus,
) -> Result<(), TestCaseError> {
    prop_assume!(!corpus.entities().is_empty());
    let gazetteer = build_gazetteer(&corpus).unwrap();
    let by_review = corpus.entities_by_review();
    for review in corpus.reviews().values() {
        let spans = gazetteer.tag(review).unwrap();
        for pair in spans.windows(2) {
            prop_assert!(pair[0].end() <= pair[1].start());
        }
        for gold in by_review.get(review.id.as_str()).into_iter().flatten() {
            if !gold.span.is_contiguous() {
                continue;
            }
            let hit = spans
                .iter()
                .any(|s| s.start() < gold.span.end() && gold.span.start() < s.end());
            prop_assert!(hit, "no span overlaps {:?} in {:?}", gold.span, review.text);
        }
    }
    Ok(())
}

pub fn folds_partition_ids_input() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..200, 2usize..10, any::<u64>())
}

pub fn folds_partition_ids((n, k, seed): (usize, usize, u64)) -> Result<(), TestCaseError> {
    prop_assume!(n >= k);
    let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
    let folds = make_folds_for(ids.clone(), k, seed).unwrap();
    let mut seen = BTreeSet::new();
    for f in 0..k {
        for id in folds.members(f) {
            prop_assert!(seen.insert(id.to_string()), "{} in two folds", id);
        }
    }
    prop_assert_eq!(seen.len(), n);
    let sizes = folds.sizes();
    prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    prop_assert_eq!(make_folds_for(ids, k, seed).unwrap(), folds);
    Ok(())
}

pub fn corpus_jsonl_round_trip_input() -> impl Strategy<Value = Corpus> {
    corpus_strategy()
}

pub fn corpus_jsonl_round_trip(corpus: Corpus) -> Result<(), TestCaseError> {
    let mut buf = Vec::new();
    write_corpus(&corpus, &mut buf).unwrap();
    let back = read_corpus("prop", buf.as_slice()).unwrap();
    prop_assert_eq!(back.reviews(), corpus.reviews());
    prop_assert_eq!(back.entities(), corpus.entities());
    Ok(())
}

pub fn reviews_csv_round_trip_input() -> impl Strategy<Value = Vec<Review>> {
    reviews_strategy()
}

pub fn reviews_csv_round_trip(mut reviews: Vec<Review>) -> Result<(), TestCaseError> {
    for r in &mut reviews {
        r.rating.get_or_insert(3);
    }
    let mut buf = Vec::new();
    write_reviews(&reviews, &mut buf).unwrap();
    prop_assert_eq!(read_reviews(buf.as_slice()).unwrap(), reviews);
    Ok(())
}

pub fn no_review_crosses_the_fold_boundary_input() -> impl Strategy<Value = (Corpus, u64)> {
    (corpus_strategy(), any::<u64>())
}

pub fn no_review_crosses_the_fold_boundary(
    (corpus, seed): (Corpus, u64),
) -> Result<(), TestCaseError> {
    let adr = corpus
        .entities()
        .iter()
        .filter(|e| e.label == Label::Adr)
        .count();
    prop_assume!(corpus.reviews().len() >= 5 && adr > 0 && adr < corpus.entities().len());
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::baseline()
    };
    let settings = EvalSettings::new(&LogisticTrainer, &config, 5, seed);
    let (_, traces) = run_in_dataset_traced(&corpus, &settings).unwrap();
    let mut tested = BTreeSet::new();
    for t in &traces {
        prop_assert!(t.train_review_ids.is_disjoint(&t.test_review_ids));
        for id in &t.test_review_ids {
            prop_assert!(tested.insert(id.clone()));
        }
    }
    let all: BTreeSet<String> = corpus.reviews().keys().cloned().collect();
    prop_assert_eq!(tested, all);
    Ok(())
}

pub fn pseudo_annotation_is_tag_then_classify_input() -> impl Strategy<Value = (Corpus, Vec<Review>)>
{
    (corpus_strategy(), reviews_strategy())
}

pub fn pseudo_annotation_is_tag_then_classify(
    (corpus, raw): (Corpus, Vec<Review>),
) -> Result<(), TestCaseError> {
    let adr = corpus
        .entities()
        .iter()
        .filter(|e| e.label == Label::Adr)
        .count();
    prop_assume!(adr > 0 && adr < corpus.entities().len());
    let config = TrainConfig {
        epochs: 3,
        ..TrainConfig::baseline()
    };
    let window = Window::Tokens(2);
    let examples: Vec<_> = corpus
        .entities()
        .iter()
        .map(|e| {
            (
                make_context(corpus.review(e.review_id()).unwrap(), &e.span, window).unwrap(),
                e.label,
            )
        })
        .collect();
    let model = LogisticTrainer.fit(&config, &examples, None).unwrap();
    let gazetteer = build_gazetteer(&corpus).unwrap();
    let options = PseudoOptions {
        window,
        adr_texts_only: false,
        source_corpus: "prop".into(),
    };
    let set = pseudo_annotate(
        &gazetteer,
        &model,
        &raw,
        &DedupPolicy::none(),
        &SelectionStrategy::Full,
        &options,
    )
    .unwrap();

    let mut expected = Vec::new();
    for review in &raw {
        let contexts: Vec<_> = gazetteer
            .tag(review)
            .unwrap()
            .iter()
            .map(|s| make_context(review, s, window).unwrap())
            .collect();
        for p in predict(&model, &contexts).unwrap() {
            expected.push(LabeledEntity::pseudo(p.span, p.label, p.score));
        }
    }
    prop_assert_eq!(set.entities, expected);
    prop_assert_eq!(ids(&set.reviews), ids(&raw));
    Ok(())
}

/// Runs every property with `cases` cases (slow ones with a quarter).
pub fn run_all(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "full_selection_is_identity",
            check(
                cases,
                full_selection_is_identity_input(),
                full_selection_is_identity,
            ),
        ),
        (
            "selection_is_idempotent",
            check(
                cases,
                selection_is_idempotent_input(),
                selection_is_idempotent,
            ),
        ),
        (
            "selections_commute",
            check(cases, selections_commute_input(), selections_commute),
        ),
        (
            "augment_conserves_gold",
            check(
                cases,
                augment_conserves_gold_input(),
                augment_conserves_gold,
            ),
        ),
        (
            "gazetteer_spans_are_sorted_disjoint_and_cover_training_entities",
            check(
                cases,
                gazetteer_spans_are_sorted_disjoint_and_cover_training_entities_input(),
                gazetteer_spans_are_sorted_disjoint_and_cover_training_entities,
            ),
        ),
        (
            "folds_partition_ids",
            check(cases, folds_partition_ids_input(), folds_partition_ids),
        ),
        (
            "corpus_jsonl_round_trip",
            check(
                cases,
                corpus_jsonl_round_trip_input(),
                corpus_jsonl_round_trip,
            ),
        ),
        (
            "reviews_csv_round_trip",
            check(
                cases,
                reviews_csv_round_trip_input(),
                reviews_csv_round_trip,
            ),
        ),
        (
            "no_review_crosses_the_fold_boundary",
            check(
                (cases / 4).max(1),
                no_review_crosses_the_fold_boundary_input(),
                no_review_crosses_the_fold_boundary,
            ),
        ),
        (
            "pseudo_annotation_is_tag_then_classify",
            check(
                (cases / 4).max(1),
                pseudo_annotation_is_tag_then_classify_input(),
                pseudo_annotation_is_tag_then_classify,
            ),
        ),
    ]
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    property: fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, property).map_err(|e| e.to_string())
}

/// Counts agreements class by class with no shared bookkeeping.
pub fn oracle(gold: &[Label], pred: &[Label]) -> [(f64, f64, f64); 2] {
    let mut out = [(0.0, 0.0, 0.0); 2];
    for (slot, class) in Label::ALL.iter().enumerate() {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        let mut actual = 0.0;
        for i in 0..gold.len() {
            if pred[i] == *class {
                predicted += 1.0;
            }
            if gold[i] == *class {
                actual += 1.0;
            }
            if pred[i] == *class && gold[i] == *class {
                tp += 1.0;
            }
        }
        let p = if predicted == 0.0 {
            0.0
        } else {
            tp / predicted
        };
        let r = if actual == 0.0 { 0.0 } else { tp / actual };
        let f = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        out[slot] = (p, r, f);
    }
    out
}

pub fn check_against_oracle(gold: &[LabeledEntity], preds: &[Prediction], m: &MetricsRecord) {
    let mut g = Vec::new();
    let mut p = Vec::new();
    // predictions were shuffled relative to gold; pair them back by key
    let mut by_key: HashMap<(String, Vec<Fragment>), Vec<Label>> = HashMap::new();
    for e in gold {
        by_key
            .entry((e.span.review_id.clone(), e.span.fragments.clone()))
            .or_default()
            .push(e.label);
    }
    for pr in preds {
        let labels = by_key
            .get_mut(&(pr.review_id.clone(), pr.span.fragments.clone()))
            .unwrap();
        g.push(labels.remove(0));
        p.push(pr.label);
    }
    let expected = oracle(&g, &p);
    for (slot, class) in Label::ALL.iter().enumerate() {
        let c = m.class(*class);
        let (ep, er, ef) = expected[slot];
        assert!(
            (c.precision - ep).abs() < 1e-9
                && (c.recall - er).abs() < 1e-9
                && (c.f1 - ef).abs() < 1e-9
        );
    }
    let mp = (expected[0].0 + expected[1].0) / 2.0;
    let mr = (expected[0].1 + expected[1].1) / 2.0;
    let mf = (expected[0].2 + expected[1].2) / 2.0;
    assert!((m.macro_avg.precision - mp).abs() < 1e-9);
    assert!((m.macro_avg.recall - mr).abs() < 1e-9);
    assert!((m.macro_avg.f1 - mf).abs() < 1e-9);
}

/// Compares `compute_metrics` with [`oracle`] on `n` random instances.
pub fn metrics_against_oracle(n: usize) {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..n {
        let n = rng.gen_range(1..60);
        let review = Review::new("r", "d", None, "x ".repeat(n)).unwrap();
        let mut gold = Vec::new();
        let mut preds = Vec::new();
        for i in 0..n {
            // a quarter of the keys are reused to exercise repeated spans
            let at = if i > 0 && rng.gen_bool(0.25) {
                rng.gen_range(0..i)
            } else {
                i
            };
            let span =
                EntitySpan::from_review(&review, vec![Fragment::new(2 * at, 2 * at + 1)]).unwrap();
            let g = if rng.gen_bool(0.5) {
                Label::Adr
            } else {
                Label::NonAdr
            };
            let score: f64 = rng.gen();
            gold.push(LabeledEntity::gold(span.clone(), g, None));
            preds.push(Prediction {
                review_id: "r".into(),
                span,
                label: Label::from_score(score),
                score,
            });
        }
        preds.shuffle(&mut rng);
        let m = compute_metrics(&gold, &preds).unwrap();
        check_against_oracle(&gold, &preds, &m);
    }
}

/// Largest relative error between the analytic logistic gradient and
/// central differences over `trials` random problems.
pub fn gradient_check(trials: usize) -> f64 {
    use adr_pseudo::classifier::{Objective, SparseRow};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let dim = rng.gen_range(1..12);
        let rows: Vec<SparseRow> = (0..rng.gen_range(1..40))
            .map(|_| SparseRow {
                features: (0..dim).filter(|_| rng.gen_bool(0.3)).collect(),
                target: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
            })
            .collect();
        let objective = Objective {
            rows: &rows,
            l2: rng.gen_range(0.0..0.1),
        };
        let params: Vec<f64> = (0..=dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let analytic = objective.gradient(&params);
        let h = 1e-5;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[i] += h;
            down[i] -= h;
            let numeric = (objective.loss(&up) - objective.loss(&down)) / (2.0 * h);
            let scale = numeric.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max((numeric - analytic[i]).abs() / scale);
        }
    }
    worst
}
