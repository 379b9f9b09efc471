mod augment;
mod data;
mod model;

use std::path::{Path, PathBuf};

use clap::Subcommand;

use sarcasm_core::dataset::{parse_jsonl_str, parse_window_sizes, DialogueRecord, WindowSize};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::Stage;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a labeled corpus into train.jsonl and valid.jsonl.
    Split(data::SplitArgs),
    /// Derive context negatives, back-translated positives and CRA samples.
    Augment(augment::AugmentArgs),
    /// Train the next-sentence scorer used to rerank CRA candidates.
    TrainNsp(augment::TrainNspArgs),
    /// Train a context ensemble and write a run directory.
    Train(model::TrainArgs),
    /// Score records with a trained ensemble.
    Predict(model::PredictArgs),
    /// Compare predictions against gold labels.
    Eval(model::EvalArgs),
    /// Finite-difference gradient checks of every layer.
    Gradcheck(model::GradcheckArgs),
    /// Train the same ensemble under each pooling mode and tabulate.
    ComparePooling(model::ComparePoolingArgs),
    /// Write a synthetic corpus.
    Synth(data::SynthArgs),
    /// Print the default configuration as JSON.
    DefaultConfig(data::DefaultConfigArgs),
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Split(a) => data::split(a),
        Command::Augment(a) => augment::augment(a),
        Command::TrainNsp(a) => augment::train_nsp(a),
        Command::Train(a) => model::train(a),
        Command::Predict(a) => model::predict(a),
        Command::Eval(a) => model::eval(a),
        Command::Gradcheck(a) => model::gradcheck(a),
        Command::ComparePooling(a) => model::compare_pooling(a),
        Command::Synth(a) => data::synth(a),
        Command::DefaultConfig(a) => data::default_config(a),
    }
}

/// The configuration file if given (recorded as a stage input), otherwise
/// the defaults.
fn load_config(stage: &mut Stage, path: Option<&PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => {
            let text = stage.read_string(p)?;
            PipelineConfig::from_json_str(&text, &p.display().to_string())
        }
        None => {
            let cfg = PipelineConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn load_records(
    stage: &mut Stage,
    path: &Path,
    labeled: bool,
) -> Result<Vec<DialogueRecord>, CliError> {
    let text = stage.read_string(path)?;
    let records = parse_jsonl_str(&text, labeled)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if records.is_empty() {
        return Err(CliError::usage(format!("{}: no records", path.display())));
    }
    Ok(records)
}

fn window_sizes(flag: Option<&str>) -> Result<Option<Vec<WindowSize>>, CliError> {
    flag.map(|s| {
        parse_window_sizes(s).map_err(|e| CliError::usage(format!("--window-sizes: {e}")))
    })
    .transpose()
}

fn jsonl<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(&row).expect("rows serialize"));
        out.push('\n');
    }
    out
}
