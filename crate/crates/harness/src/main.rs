use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use avvp_core::data::{dataset_stats, generate_dataset, save_dataset, DatasetConfig};

use avvp_harness::checkpoint::Checkpoint;
use avvp_harness::compare::{ablate, compare, resolve_dataset, AblateConfig, CompareConfig};
use avvp_harness::config::ExperimentConfig;
use avvp_harness::evaluate::evaluate_model;
use avvp_harness::model::Model;
use avvp_harness::report::emit_report;
use avvp_harness::train::train;
use avvp_harness::HarnessError;

#[derive(Parser)]
#[command(
    name = "avvp",
    version,
    about = "Audio-visual video parsing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory from a dataset config.
    GenData {
        /// Dataset config JSON path.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and save the best checkpoint plus the training log.
    Train {
        /// Experiment config JSON path.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (checkpoint.json, train_log.json); falls back
        /// to the config's report_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which split to score: train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Report file path; falls back to the config's report_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several configs over shared seeds and tabulate test metrics.
    Compare {
        /// Comparison config JSON path.
        #[arg(long)]
        config: PathBuf,
        /// Replace the seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one knob of a base config and tabulate the results.
    Ablate {
        /// Ablation config JSON path.
        #[arg(long)]
        config: PathBuf,
        /// Override the base config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn resolve_out(
    cli_out: Option<PathBuf>,
    config: &ExperimentConfig,
) -> Result<PathBuf, HarnessError> {
    cli_out
        .or_else(|| config.report_path.clone())
        .ok_or_else(|| {
            HarnessError::Validation(
                "no output path: pass --out or set report_path in the config".into(),
            )
        })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let mut dataset_config: DatasetConfig = read_json(&config)?;
            if let Some(seed) = seed {
                dataset_config.seed = seed;
            }
            let dataset = generate_dataset(&dataset_config)?;
            save_dataset(&dataset, &out)?;
            let stats = json!({
                "train": serde_json::to_value(dataset_stats(&dataset.train))?,
                "val": serde_json::to_value(dataset_stats(&dataset.val))?,
                "test": serde_json::to_value(dataset_stats(&dataset.test))?,
            });
            emit_report(&stats, &out.join("stats.json"))?;
            println!(
                "wrote {} train / {} val / {} test videos to {}",
                dataset.train.len(),
                dataset.val.len(),
                dataset.test.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { config, seed, out } => {
            let mut experiment: ExperimentConfig = read_json(&config)?;
            if let Some(seed) = seed {
                experiment.seed = seed;
            }
            experiment.validate()?;
            let out = resolve_out(out, &experiment)?;
            let dataset = resolve_dataset(&experiment.dataset)?;
            let outcome = train(&experiment, &dataset)?;
            outcome.best.save(&out.join("checkpoint.json"))?;
            emit_report(&outcome.log_json(&experiment), &out.join("train_log.json"))?;
            let last = outcome.log.last().expect("nonempty log");
            println!(
                "trained {} epochs; best epoch {} (val segment Type@AV {:.4}); final train loss {:.4}",
                outcome.log.len(),
                outcome.best.epoch,
                outcome.log[outcome.best.epoch - 1].val_segment_type_at_av,
                last.total
            );
            println!("checkpoint: {}", out.join("checkpoint.json").display());
            Ok(())
        }
        Command::Eval {
            config,
            seed,
            checkpoint,
            split,
            out,
        } => {
            let mut experiment: ExperimentConfig = read_json(&config)?;
            if let Some(seed) = seed {
                experiment.seed = seed;
            }
            experiment.validate()?;
            let out = resolve_out(out, &experiment)?;
            let dataset = resolve_dataset(&experiment.dataset)?;
            let videos = dataset.split(&split).ok_or_else(|| {
                HarnessError::Validation(format!(
                    "unknown split {split:?}; expected train, val, or test"
                ))
            })?;
            let stored = Checkpoint::load(&checkpoint)?;
            let mut model = Model::init(&experiment, &dataset.config)?;
            stored.restore(&mut model)?;
            let evaluation = evaluate_model(&model, videos, experiment.threshold);
            let report = json!({
                "artifact_version": env!("CARGO_PKG_VERSION"),
                "config_hash": experiment.hash(),
                "checkpoint_epoch": stored.epoch,
                "split": split,
                "threshold": experiment.threshold,
                "results": evaluation.to_json(),
            });
            emit_report(&report, &out)?;
            let s = evaluation.all.segment;
            println!(
                "{split}: segment A {:.4} V {:.4} AV {:.4} Type@AV {:.4} Event@AV {:.4}",
                s.audio, s.visual, s.audio_visual, s.type_at_av, s.event_at_av
            );
            println!("report: {}", out.display());
            Ok(())
        }
        Command::Compare { config, seed, out } => {
            let mut cc: CompareConfig = read_json(&config)?;
            if let Some(seed) = seed {
                cc.seeds = vec![seed];
            }
            let outcome = compare(&cc)?;
            emit_report(&outcome.json, &out)?;
            let table_path = out.with_extension("txt");
            std::fs::write(&table_path, &outcome.table)?;
            print!("{}", outcome.table);
            println!(
                "report: {} (table: {})",
                out.display(),
                table_path.display()
            );
            Ok(())
        }
        Command::Ablate { config, seed, out } => {
            let mut ac: AblateConfig = read_json(&config)?;
            if let Some(seed) = seed {
                ac.base.seed = seed;
            }
            let outcome = ablate(&ac)?;
            emit_report(&outcome.json, &out)?;
            let table_path = out.with_extension("txt");
            std::fs::write(&table_path, &outcome.table)?;
            print!("{}", outcome.table);
            println!(
                "report: {} (table: {})",
                out.display(),
                table_path.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
