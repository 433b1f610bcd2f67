//! Declarative experiments: one TOML file describes one result-table row.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{
    make_context, train, Capabilities, CommandTrainer, EntityInContext, LogisticTrainer, Model,
    TrainConfig, Trainer, Window,
};
use crate::corpus::{
    corpus_stats, load_cadec, load_psytar, load_reviews, read_corpus_file, review_stats, Corpus,
    Label, Review, StatsRecord,
};
use crate::error::{Error, Result};
use crate::harness::{
    report_json, run_in_dataset, run_out_of_dataset, summary_rows, write_summary_csv, EvalReport,
    EvalSettings,
};
use crate::ner::build_gazetteer;
use crate::pseudo::{
    pseudo_annotate, read_pseudo_set, select, write_pseudo_set, DedupPolicy, PseudoManifest,
    PseudoOptions, PseudoSet, SelectionStrategy,
};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "ADR_PSEUDO_OUTPUT_DIR";

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PSEUDO_DIR: &str = "pseudo";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Cadec,
    Psytar,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Full,
    TargetDrugs,
    MinRating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Ian,
    Bert,
    Plugin,
}

fn default_k() -> usize {
    5
}

fn default_seed() -> u64 {
    42
}

fn default_model() -> ModelKind {
    ModelKind::Baseline
}

/// Flat key/value experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source_corpus: PathBuf,
    pub source_format: CorpusFormat,
    pub source_posts: Option<PathBuf>,
    pub target_corpus: Option<PathBuf>,
    pub target_format: Option<CorpusFormat>,
    pub target_posts: Option<PathBuf>,
    pub raw_reviews: Option<PathBuf>,
    pub strategy: Option<StrategyKind>,
    /// Drug set for `target_drugs`; defaults to the target corpus drugs.
    pub target_drugs: Option<Vec<String>>,
    /// Previously written pseudo set directory to reuse.
    pub pseudo_set: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    pub plugin_command: Option<Vec<String>>,
    #[serde(default)]
    pub plugin_deterministic: bool,
    #[serde(default)]
    pub plugin_seedable: bool,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden_units: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2: Option<f64>,
    pub dropout: Option<f64>,
    pub window: Option<Window>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub adr_texts_only: bool,
    #[serde(default)]
    pub confidence_floor: f64,
    /// Start augmented training from the source model's weights.
    #[serde(default)]
    pub warm_start: bool,
    pub output_dir: PathBuf,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.resolve(&self.output_dir),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = match self.model {
            ModelKind::Baseline => TrainConfig::baseline(),
            ModelKind::Ian | ModelKind::Plugin => TrainConfig::ian(),
            ModelKind::Bert => TrainConfig::bert(),
        };
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            hidden_units: self.hidden_units.unwrap_or(base.hidden_units),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            l2: self.l2.unwrap_or(base.l2),
            dropout: self.dropout.unwrap_or(base.dropout),
            seed: self.seed,
            window: self.window.unwrap_or(base.window),
        }
    }

    pub fn trainer(&self) -> Result<Box<dyn Trainer>> {
        if self.model == ModelKind::Baseline {
            return Ok(Box::new(LogisticTrainer));
        }
        let command = self
            .plugin_command
            .as_ref()
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::Config("plugin models need plugin_command".into()))?;
        let name = match self.model {
            ModelKind::Ian => "ian",
            ModelKind::Bert => "bert",
            _ => "plugin",
        };
        Ok(Box::new(CommandTrainer::new(
            name,
            command[0].clone(),
            command[1..].to_vec(),
            Capabilities {
                deterministic: self.plugin_deterministic,
                seedable: self.plugin_seedable,
            },
        )))
    }

    /// Row label in result tables, e.g. `cadec_like + AskaPatient_1`.
    pub fn train_set_label(&self, source: &str) -> String {
        match self.strategy {
            None => source.to_string(),
            Some(kind) => {
                let name = match kind {
                    StrategyKind::Full => "AskaPatient_full",
                    StrategyKind::TargetDrugs => "AskaPatient_target",
                    StrategyKind::MinRating => "AskaPatient_1",
                };
                format!("{source} + {name}")
            }
        }
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationResult {
    pub violations: Vec<String>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every violation; never touches the filesystem beyond
/// existence checks.
pub fn validate_config(config: &ExperimentConfig) -> ValidationResult {
    let mut v = Vec::new();
    if config.k < 2 {
        v.push("k must be ≥ 2".to_string());
    }
    if config.strategy.is_some() && config.raw_reviews.is_none() && config.pseudo_set.is_none() {
        v.push("strategy requires raw_reviews".to_string());
    }
    if (config.strategy.is_some() || config.pseudo_set.is_some()) && config.target_corpus.is_none()
    {
        v.push(
            "strategy requires target_corpus (augmentation is evaluated out-of-dataset)"
                .to_string(),
        );
    }
    if config.pseudo_set.is_some() && config.strategy.is_none() {
        v.push("pseudo_set requires strategy".to_string());
    }
    if config.target_corpus.is_some() != config.target_format.is_some() {
        v.push("target_corpus and target_format must be given together".to_string());
    }
    if config.target_drugs.is_some() && config.strategy != Some(StrategyKind::TargetDrugs) {
        v.push("target_drugs is only used with strategy = \"target_drugs\"".to_string());
    }
    if config.target_drugs.as_ref().is_some_and(Vec::is_empty) {
        v.push("target_drugs must not be empty".to_string());
    }
    if config.strategy == Some(StrategyKind::TargetDrugs)
        && config.target_drugs.is_none()
        && config.target_corpus.is_none()
    {
        v.push("target_drugs strategy needs target_drugs or a target corpus".to_string());
    }
    if !(0.0..=1.0).contains(&config.confidence_floor) {
        v.push("confidence_floor must be in [0, 1]".to_string());
    }
    if config.model != ModelKind::Baseline
        && config.plugin_command.as_ref().is_none_or(Vec::is_empty)
    {
        v.push("plugin models need plugin_command".to_string());
    }
    if config.warm_start && config.model != ModelKind::Baseline {
        v.push("warm_start is only supported by the baseline model".to_string());
    }
    if let Err(Error::Config(msg)) = config.train_config().validate() {
        v.extend(msg.split("; ").map(String::from));
    }

    let mut check_path = |key: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            if !config.resolve(p).exists() {
                v.push(format!(
                    "{key}: {} does not exist",
                    config.resolve(p).display()
                ));
            }
        }
    };
    check_path("source_corpus", &Some(config.source_corpus.clone()));
    check_path("source_posts", &config.source_posts);
    check_path("target_corpus", &config.target_corpus);
    check_path("target_posts", &config.target_posts);
    check_path("raw_reviews", &config.raw_reviews);
    check_path("pseudo_set", &config.pseudo_set);

    if config.source_format == CorpusFormat::Psytar && config.source_posts.is_none() {
        v.push("psytar source needs source_posts".to_string());
    }
    if config.target_format == Some(CorpusFormat::Psytar) && config.target_posts.is_none() {
        v.push("psytar target needs target_posts".to_string());
    }
    ValidationResult { violations: v }
}

/// Loads a corpus in `format`; PsyTAR skipped rows are returned alongside.
pub fn load_corpus(
    format: CorpusFormat,
    path: &Path,
    posts: Option<&Path>,
) -> Result<(Corpus, usize)> {
    match format {
        CorpusFormat::Cadec => Ok((load_cadec(path)?, 0)),
        CorpusFormat::Jsonl => Ok((read_corpus_file(path)?, 0)),
        CorpusFormat::Psytar => {
            let posts =
                posts.ok_or_else(|| Error::Config("psytar corpus needs a posts file".into()))?;
            let load = load_psytar(path, posts)?;
            for s in &load.skipped {
                log::warn!("skipped PsyTAR row {} ({}): {}", s.row, s.post_id, s.reason);
            }
            Ok((load.corpus, load.skipped.len()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub stats: StatsRecord,
    pub skipped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub report_digest: Option<String>,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub source: CorpusSummary,
    pub target: Option<CorpusSummary>,
    pub raw_reviews: Option<StatsRecord>,
    pub pseudo: Option<PseudoManifest>,
    pub wall_clock_seconds: f64,
}

struct Loaded {
    source: Corpus,
    target: Option<Corpus>,
    raw: Option<Vec<Review>>,
    manifest: RunManifest,
}

fn load_inputs(config: &ExperimentConfig) -> Result<Loaded> {
    let posts = config.source_posts.as_ref().map(|p| config.resolve(p));
    let (source, skipped) = load_corpus(
        config.source_format,
        &config.resolve(&config.source_corpus),
        posts.as_deref(),
    )?;
    let target = match (&config.target_corpus, config.target_format) {
        (Some(p), Some(fmt)) => {
            let posts = config.target_posts.as_ref().map(|p| config.resolve(p));
            Some(load_corpus(fmt, &config.resolve(p), posts.as_deref())?)
        }
        _ => None,
    };
    let raw = match &config.raw_reviews {
        Some(p) if config.pseudo_set.is_none() => Some(load_reviews(&config.resolve(p))?),
        _ => None,
    };
    let manifest = RunManifest {
        config_digest: config.digest(),
        report_digest: None,
        seed: config.seed,
        train_config: config.train_config(),
        source: CorpusSummary {
            stats: corpus_stats(&source),
            skipped_rows: skipped,
        },
        target: target.as_ref().map(|(c, s)| CorpusSummary {
            stats: corpus_stats(c),
            skipped_rows: *s,
        }),
        raw_reviews: raw.as_ref().map(|r| review_stats("raw_reviews", r)),
        pseudo: None,
        wall_clock_seconds: 0.0,
    };
    Ok(Loaded {
        source,
        target: target.map(|(c, _)| c),
        raw,
        manifest,
    })
}

fn strategy_for(
    config: &ExperimentConfig,
    target: Option<&Corpus>,
) -> Result<Option<SelectionStrategy>> {
    Ok(match config.strategy {
        None => None,
        Some(StrategyKind::Full) => Some(SelectionStrategy::Full),
        Some(StrategyKind::MinRating) => Some(SelectionStrategy::MinRating),
        Some(StrategyKind::TargetDrugs) => Some(match (&config.target_drugs, target) {
            (Some(drugs), _) => SelectionStrategy::target_drugs(drugs)?,
            (None, Some(t)) => SelectionStrategy::target_drugs(t.drugs())?,
            (None, None) => return Err(Error::Config("no drug set for target_drugs".into())),
        }),
    })
}

/// Trains the tagger and classifier on all gold entities of `source`.
pub fn train_source_model(
    source: &Corpus,
    trainer: &dyn Trainer,
    config: &TrainConfig,
) -> Result<Box<dyn Model>> {
    let examples: Vec<(EntityInContext, Label)> = source
        .entities()
        .iter()
        .map(|e| {
            let review = source.review(e.review_id()).expect("corpus invariant");
            Ok((make_context(review, &e.span, config.window)?, e.label))
        })
        .collect::<Result<_>>()?;
    train(trainer, config, &examples, None)
}

/// Steps 1-3: source models, pseudo-annotation, selection.
fn build_pseudo_set(
    config: &ExperimentConfig,
    source: &Corpus,
    target: Option<&Corpus>,
    raw: &[Review],
    source_model: &dyn Model,
) -> Result<Option<PseudoSet>> {
    let Some(strategy) = strategy_for(config, target)? else {
        return Ok(None);
    };
    let tagger = build_gazetteer(source)?;
    let selected = select(raw, &strategy)?;
    info!(
        "{} of {} raw reviews selected by {strategy}",
        selected.len(),
        raw.len()
    );
    let options = PseudoOptions {
        window: config.train_config().window,
        adr_texts_only: config.adr_texts_only,
        source_corpus: source.name().to_string(),
    };
    let set = pseudo_annotate(
        &tagger,
        source_model,
        &selected,
        &DedupPolicy::against(&[source]),
        &strategy,
        &options,
    )?;
    info!(
        "pseudo set: {} reviews, {} entities ({} ADR)",
        set.review_count,
        set.entities.len(),
        set.adr_count()
    );
    Ok(Some(set))
}

/// Stages output in a scratch directory and moves it into place only
/// after everything succeeded.
struct Staging {
    dir: Option<tempfile::TempDir>,
    files: Vec<PathBuf>,
    // output directory created by this run, removed again on failure
    created: Option<PathBuf>,
}

impl Staging {
    fn new(output_dir: &Path) -> Result<Self> {
        let created = (!output_dir.exists()).then(|| output_dir.to_path_buf());
        fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(output_dir)
            .map_err(|e| Error::io(output_dir, e))?;
        Ok(Staging {
            dir: Some(dir),
            files: Vec::new(),
            created,
        })
    }

    fn path(&self) -> &Path {
        self.dir.as_ref().expect("live staging dir").path()
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.path().join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn commit(mut self, output_dir: &Path) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::new();
        for name in &self.files {
            let to = output_dir.join(name);
            if to.is_dir() {
                fs::remove_dir_all(&to).map_err(|e| Error::io(&to, e))?;
            }
            let from = self.path().join(name);
            if let Err(e) = fs::rename(&from, &to) {
                for done in &moved {
                    let _ = remove_any(&output_dir.join(done));
                }
                return Err(Error::io(&to, e));
            }
            moved.push(name.clone());
        }
        self.created = None;
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if let Some(dir) = self.dir.take() {
            let _ = dir.close();
        }
        if let Some(created) = &self.created {
            let _ = fs::remove_dir(created);
        }
    }
}

fn remove_any(p: &Path) -> std::io::Result<()> {
    if p.is_dir() {
        fs::remove_dir_all(p)
    } else {
        fs::remove_file(p)
    }
}

fn fail_if_invalid(config: &ExperimentConfig) -> Result<()> {
    let validation = validate_config(config);
    if validation.is_ok() {
        Ok(())
    } else {
        Err(Error::Config(validation.violations.join("; ")))
    }
}

/// Validation plus corpus statistics, without training.
pub fn dry_run(config: &ExperimentConfig) -> Result<RunManifest> {
    fail_if_invalid(config)?;
    Ok(load_inputs(config)?.manifest)
}

/// Runs steps 1-3 and persists the pseudo set under `<output_dir>/pseudo`.
pub fn run_pseudo(config: &ExperimentConfig) -> Result<PseudoManifest> {
    fail_if_invalid(config)?;
    let loaded = load_inputs(config)?;
    let raw = loaded
        .raw
        .as_ref()
        .ok_or_else(|| Error::Config("pseudo needs raw_reviews".into()))?;
    let trainer = config.trainer()?;
    let train_config = config.train_config();
    let model = train_source_model(&loaded.source, trainer.as_ref(), &train_config)?;
    let set = build_pseudo_set(
        config,
        &loaded.source,
        loaded.target.as_ref(),
        raw,
        model.as_ref(),
    )?
    .ok_or_else(|| Error::Config("pseudo needs a strategy".into()))?;
    let output_dir = config.output_dir();
    let staging = Staging::new(&output_dir)?;
    let manifest = write_pseudo_set(&set, config.seed, &staging.path().join(PSEUDO_DIR))?;
    let mut staging = staging;
    staging.files.push(PathBuf::from(PSEUDO_DIR));
    staging.commit(&output_dir)?;
    Ok(manifest)
}

/// Full pipeline: writes `report.json`, `summary.csv`, `manifest.json`
/// and, when pseudo-annotation ran, `pseudo/`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(EvalReport, RunManifest)> {
    let started = Instant::now();
    fail_if_invalid(config)?;
    let Loaded {
        source,
        target,
        raw,
        mut manifest,
    } = load_inputs(config)?;
    let trainer = config.trainer()?;
    let train_config = config.train_config();
    let output_dir = config.output_dir();
    let mut staging = Staging::new(&output_dir)?;

    let report = match &target {
        None => {
            let settings =
                EvalSettings::new(trainer.as_ref(), &train_config, config.k, config.seed);
            run_in_dataset(&source, &settings)?
        }
        Some(target) => {
            let mut source_model = None;
            let pseudo = match (&config.pseudo_set, &raw) {
                (Some(dir), _) => {
                    let (set, m) = read_pseudo_set(&config.resolve(dir))?;
                    let expected = strategy_for(config, Some(target))?;
                    if expected.as_ref() != Some(&set.strategy) {
                        return Err(Error::Config(format!(
                            "pseudo_set was built with {} but the config asks for {:?}",
                            set.strategy, config.strategy
                        )));
                    }
                    manifest.pseudo = Some(m);
                    Some(set)
                }
                (None, Some(raw)) if config.strategy.is_some() => {
                    let model = train_source_model(&source, trainer.as_ref(), &train_config)?;
                    let set = build_pseudo_set(config, &source, Some(target), raw, model.as_ref())?;
                    if let Some(set) = &set {
                        manifest.pseudo = Some(write_pseudo_set(
                            set,
                            config.seed,
                            &staging.path().join(PSEUDO_DIR),
                        )?);
                        staging.files.push(PathBuf::from(PSEUDO_DIR));
                    }
                    source_model = Some(model);
                    set
                }
                _ => None,
            };
            if config.warm_start && pseudo.is_some() && source_model.is_none() {
                source_model = Some(train_source_model(
                    &source,
                    trainer.as_ref(),
                    &train_config,
                )?);
            }
            let mut settings =
                EvalSettings::new(trainer.as_ref(), &train_config, config.k, config.seed);
            settings.confidence_floor = config.confidence_floor;
            if config.warm_start {
                settings.init = source_model.as_deref();
            }
            run_out_of_dataset(&source, target, pseudo.as_ref(), &settings)?
        }
    };

    let report_text = report_json(&report)?;
    let mut summary = Vec::new();
    write_summary_csv(
        &summary_rows(
            &report,
            &config.train_set_label(source.name()),
            trainer.name(),
        ),
        &mut summary,
    )?;
    manifest.report_digest = Some(hex::encode(Sha256::digest(report_text.as_bytes())));
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    let mut manifest_text = serde_json::to_string_pretty(&manifest)?;
    manifest_text.push('\n');

    staging.write(REPORT_FILE, report_text.as_bytes())?;
    staging.write(SUMMARY_FILE, &summary)?;
    staging.write(MANIFEST_FILE, manifest_text.as_bytes())?;
    staging.commit(&output_dir)?;
    Ok((report, manifest))
}
