//! `kifa` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kifa::dataset::DatasetManifest;
use kifa::eval::{baseline_evaluate, evaluate, EvalReport};
use kifa::export::export_attention;
use kifa::net::grad_check;
use kifa::pipeline::{PipelineConfig, PipelineSession};
use kifa::skeleton::{parse_sequence, LabeledSample, SkeletonSequence};
use kifa::syngen::{generate_corpus, GenParams};
use kifa::{KifaError, Result};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "kifa", version, about = "Action recognition and fuzzy intensity indexing on skeleton sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled corpus and its manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Samples per action and intensity.
        #[arg(long = "per-class", default_value_t = 10)]
        per_class: usize,
        /// Standard deviation of the coordinate noise.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train a session on a manifest and save it.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Index one sequence and print the result as JSON.
    Index {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Leave the fuzzifier state untouched.
        #[arg(long)]
        frozen: bool,
    },
    /// Run k-fold cross validation and write a JSON report.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the logistic baseline and report it with the signed delta.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write temporal and joint attention CSVs for one sequence.
    ExportAttn {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KIFA_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate {
            out,
            seed,
            per_class,
            noise,
        } => {
            let mut params = GenParams {
                seed,
                ..GenParams::default()
            };
            if let Some(noise) = noise {
                params.noise_std = noise;
            }
            let manifest = generate_corpus(&params, per_class, &out)?;
            println!("wrote {} samples to {}", manifest.entries.len(), out.display());
        }
        Command::Train {
            data,
            config,
            out,
            seed,
        } => {
            let config = read_config(config.as_deref())?;
            let samples = read_samples(&data)?;
            let (mut session, summary) = PipelineSession::train(&config, &samples, seed)?;
            session.manifest = Some(data);
            session.save(&out)?;
            let plain = config.net.epochs - config.penalty_epochs;
            let before_penalty = plain
                .checked_sub(1)
                .map_or(summary.initial_loss, |e| summary.epoch_losses[e]);
            println!(
                "trained on {} samples: loss {:.6} -> {:.6} before the penalty phase",
                samples.len(),
                summary.initial_loss,
                before_penalty
            );
            if let Some(last) = summary.epoch_losses.last().filter(|_| config.penalty_epochs > 0) {
                println!("penalized loss after {} epochs: {last:.6}", config.penalty_epochs);
            }
            println!("session saved to {}", out.display());
        }
        Command::Index { session, input, frozen } => {
            let mut state = PipelineSession::load(&session)?;
            let seq = read_sequence(&input)?;
            let result = state.index_sample(&seq, frozen)?;
            if !frozen {
                state.save(&session)?;
            }
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Evaluate {
            data,
            config,
            folds,
            seed,
            baseline,
            report,
        } => {
            let config = read_config(config.as_deref())?;
            let samples = read_samples(&data)?;
            let fuzzy = evaluate(&samples, &config, folds, seed)?;
            print_summary(&fuzzy);
            let written = if baseline {
                let base = baseline_evaluate(&samples, &config, folds, seed)?.with_delta_from(&fuzzy);
                print_summary(&base);
                write_report(&report.with_extension("fuzzy.json"), &fuzzy)?;
                base
            } else {
                fuzzy
            };
            write_report(&report, &written)?;
        }
        Command::ExportAttn {
            session,
            input,
            out,
            force,
        } => {
            let state = PipelineSession::load(&session)?;
            let seq = read_sequence(&input)?;
            let export = export_attention(&state, &seq, &out, force)?;
            println!("{}", export.temporal_path.display());
            println!("{}", export.joint_path.display());
        }
        Command::Gradcheck { seed, h, config } => {
            let config = read_config(config.as_deref())?;
            let error = grad_check(&config.net, seed, h)?;
            println!("max relative error {error:.3e}");
            if !(error <= GRADCHECK_TOLERANCE) {
                eprintln!("gradient check exceeds {GRADCHECK_TOLERANCE:e}");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| KifaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(path) => PipelineConfig::from_json(&read_text(path)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_samples(manifest: &Path) -> Result<Vec<LabeledSample>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    DatasetManifest::read(manifest)?.load_samples(base)
}

fn read_sequence(path: &Path) -> Result<SkeletonSequence> {
    parse_sequence(&read_text(path)?)
}

fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, report.to_json()).map_err(|source| KifaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    log::info!("report written to {}", path.display());
    Ok(())
}

fn print_summary(report: &EvalReport) {
    let delta = report
        .delta
        .map(|d| format!(", intensity delta {:+.4}", d.intensity_accuracy))
        .unwrap_or_default();
    println!(
        "{}: action accuracy {:.4}, intensity accuracy {:.4}, F1 {:.4}, ties {}{delta}",
        report.method, report.action_accuracy, report.intensity.accuracy, report.intensity.f1_averaged, report.ties
    );
}
