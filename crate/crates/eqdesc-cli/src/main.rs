//! `eqdesc`: generate synthetic equation corpora, train the image-to-text
//! describer, evaluate it, describe single images, and run property suites.
//!
//! Exit codes: 0 on success, 1 when a check suite fails, 2 on usage or
//! input/output errors. `EQDESC_THREADS` caps the worker pool.

use clap::{Parser, Subcommand};
use eqdesc_core::data::Split;
use eqdesc_core::pipeline::{self, RunConfig, Suite};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "eqdesc", version, about = "equation image description pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: images, manifest and vocabulary.
    GenData {
        /// Plain-text key=value run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for images, manifest.jsonl and vocab.tsv.
        #[arg(long)]
        out: PathBuf,
        /// Override the data seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a single config key, e.g. --set train_count=64.
        #[arg(long = "set", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
    /// Train on a generated corpus; keeps the best-by-validation-BLEU-4
    /// checkpoint plus the latest one for resuming.
    Train {
        /// Directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory: checkpoints, config copy, train_log.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Resume from a last.ckpt written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long = "set", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
    /// Decode a split with beam search and score it.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Split to evaluate: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        beam: usize,
        /// Where to write the JSONL report; stdout summary either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Describe a single PGM image.
    Describe {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        beam: usize,
    },
    /// Run a property suite: roundtrip, grad or metrics.
    Check {
        #[arg(long)]
        suite: String,
    },
}

fn load_config(path: &Option<PathBuf>, overrides: &[(String, String)]) -> eqdesc_core::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

fn run(cli: Cli) -> eqdesc_core::Result<ExitCode> {
    match cli.command {
        Command::GenData {
            config,
            out,
            seed,
            set,
        } => {
            let cfg = load_config(&config, &set)?;
            let summary = pipeline::gen_data(&cfg, &out, seed)?;
            println!(
                "generated {} records, vocabulary of {} words, into {}",
                summary.records,
                summary.vocab_size,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            data,
            config,
            out,
            resume,
            set,
        } => {
            let cfg = load_config(&config, &set)?;
            let summary = pipeline::train_with_progress(
                &data,
                &cfg,
                &out,
                resume.as_deref(),
                |log| {
                    eprintln!(
                        "epoch {:>3}: train loss {:.4}, val bleu-4 {:.4}",
                        log.epoch, log.train_loss, log.val_bleu4
                    );
                },
            )?;
            println!(
                "trained {} epochs; best validation bleu-4 {:.4} at epoch {}",
                summary.epochs_run, summary.best_val_bleu4, summary.best_epoch
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            data,
            split,
            checkpoint,
            beam,
            out,
        } => {
            let split = Split::from_str(&split).ok_or_else(|| {
                eqdesc_core::Error::Config(format!("unknown split '{split}'"))
            })?;
            let report = pipeline::eval(&data, split, &checkpoint, beam, out.as_deref())?;
            println!(
                "examples {}: bleu-1 {:.4} bleu-2 {:.4} bleu-3 {:.4} bleu-4 {:.4} rouge-l {:.4} cider {:.4}",
                report.n_examples,
                report.bleu1,
                report.bleu2,
                report.bleu3,
                report.bleu4,
                report.rouge_l,
                report.cider
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Describe {
            image,
            checkpoint,
            beam,
        } => {
            let text = pipeline::describe(&image, &checkpoint, beam)?;
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { suite } => {
            let suite = Suite::from_str(&suite).ok_or_else(|| {
                eqdesc_core::Error::Config(format!(
                    "unknown suite '{suite}' (expected roundtrip, grad or metrics)"
                ))
            })?;
            let report = pipeline::check(suite);
            for line in &report.lines {
                let tag = if line.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", line.name, line.detail);
            }
            if report.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("EQDESC_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) => eqdesc_core::exec::configure_threads(Some(n)),
            Err(_) => {
                eprintln!("error: EQDESC_THREADS must be an integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
