use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use adr_pseudo::corpus::{corpus_stats, load_reviews, review_stats, StatsRecord};
use adr_pseudo::experiment::{
    dry_run, load_corpus, run_experiment, run_pseudo, validate_config, CorpusFormat,
    ExperimentConfig,
};
use adr_pseudo::{synthetic, Error};

#[derive(Parser)]
#[command(
    name = "adr-pseudo",
    version,
    about = "ADR classification with pseudo-annotated augmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report files.
    Run {
        config: PathBuf,
        /// Validate and print corpus statistics only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Print statistics for a corpus or review file.
    Stats {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        format: StatsFormat,
        /// Post texts, for --format psytar.
        #[arg(long)]
        posts: Option<PathBuf>,
    },
    /// Pseudo-annotate raw reviews and persist the selected set.
    Pseudo { config: PathBuf },
    /// Write the bundled synthetic fixtures to a directory.
    MakeFixtures { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFormat {
    Cadec,
    Psytar,
    Jsonl,
    Reviews,
}

const EXIT_INVALID: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn load_config(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_file(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_INVALID)
    })
}

fn validated(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let config = load_config(path)?;
    let result = validate_config(&config);
    if result.is_ok() {
        return Ok(config);
    }
    for v in &result.violations {
        eprintln!("invalid: {v}");
    }
    Err(ExitCode::from(EXIT_INVALID))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn runtime(result: Result<(), Error>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn stats(corpus: &Path, format: StatsFormat, posts: Option<&Path>) -> Result<StatsRecord, Error> {
    let name = corpus
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Ok(match format {
        StatsFormat::Reviews => review_stats(&name, &load_reviews(corpus)?),
        StatsFormat::Cadec => corpus_stats(&load_corpus(CorpusFormat::Cadec, corpus, None)?.0),
        StatsFormat::Jsonl => corpus_stats(&load_corpus(CorpusFormat::Jsonl, corpus, None)?.0),
        StatsFormat::Psytar => corpus_stats(&load_corpus(CorpusFormat::Psytar, corpus, posts)?.0),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match validated(&config) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            dry_run: true,
        } => match validated(&config) {
            Ok(cfg) => runtime(dry_run(&cfg).and_then(|m| print_json(&m))),
            Err(code) => code,
        },
        Command::Run {
            config,
            dry_run: false,
        } => match validated(&config) {
            Ok(cfg) => runtime(run_experiment(&cfg).map(|(report, _)| {
                if let Some(avg) = &report.averaged {
                    println!(
                        "{} -> {}: macro F {:.3} over {} fold(s), {} skipped; written to {}",
                        report.source,
                        report.target,
                        avg.macro_avg.f1,
                        report.per_fold.len(),
                        report.skipped.len(),
                        cfg.output_dir().display()
                    );
                } else {
                    println!("every fold was skipped; see {}", cfg.output_dir().display());
                }
            })),
            Err(code) => code,
        },
        Command::Pseudo { config } => match validated(&config) {
            Ok(cfg) => runtime(run_pseudo(&cfg).and_then(|m| print_json(&m))),
            Err(code) => code,
        },
        Command::Stats {
            corpus,
            format,
            posts,
        } => runtime(stats(&corpus, format, posts.as_deref()).and_then(|s| print_json(&s))),
        Command::MakeFixtures { dir } => runtime(synthetic::write_fixtures(&dir)),
    }
}
