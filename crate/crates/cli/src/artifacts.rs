//! On-disk layout of a trained ensemble: `ensemble.json` naming one
//! checkpoint per member, each holding that member's parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sarcasm_core::dataset::{Vocab, WindowSize};
use sarcasm_core::layers::checkpoint;
use sarcasm_core::layers::SarcasmModel;
use sarcasm_core::training::{Combine, EnsembleMember, EnsembleModel};

use crate::error::CliError;
use crate::manifest::Stage;

pub const ENSEMBLE_FILE: &str = "ensemble.json";
const CLASSIFIER_KIND: &str = "classifier";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleIndex {
    combine: Combine,
    members: Vec<MemberEntry>,
    vocab: Vocab,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberEntry {
    window: WindowSize,
    checkpoint: String,
}

pub fn member_file(window: WindowSize) -> String {
    format!("w{window}.ckpt")
}

/// Queues the ensemble under `prefix` in the stage's output directory.
pub fn queue_ensemble(stage: &mut Stage, prefix: &str, model: &EnsembleModel) {
    let mut members = Vec::new();
    for m in &model.members {
        let file = member_file(m.window);
        let extra = serde_json::json!({ "kind": CLASSIFIER_KIND, "window": m.window });
        stage.write(
            Path::new(prefix).join(&file),
            checkpoint::encode(&m.model.to_params(), &extra),
        );
        members.push(MemberEntry {
            window: m.window,
            checkpoint: file,
        });
    }
    let index = EnsembleIndex {
        combine: model.combine,
        members,
        vocab: model.vocab.clone(),
    };
    stage.write_json(Path::new(prefix).join(ENSEMBLE_FILE), &index);
}

/// Loads an ensemble directory, recording every file read in the stage.
pub fn load_ensemble(stage: &mut Stage, dir: &Path) -> Result<EnsembleModel, CliError> {
    let index_path = dir.join(ENSEMBLE_FILE);
    let index: EnsembleIndex = serde_json::from_slice(&stage.read(&index_path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", index_path.display())))?;
    let mut members = Vec::new();
    for entry in &index.members {
        let path = dir.join(&entry.checkpoint);
        let bytes = stage.read(&path)?;
        let (params, extra) = checkpoint::decode::<f64>(&bytes)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if extra.get("kind").and_then(|k| k.as_str()) != Some(CLASSIFIER_KIND) {
            return Err(CliError::usage(format!(
                "{}: not a classifier checkpoint",
                path.display()
            )));
        }
        let model = SarcasmModel::from_params(&params)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if model.config.encoder.vocab_size != index.vocab.len() {
            return Err(CliError::usage(format!(
                "{}: vocabulary of {} tokens, ensemble has {}",
                path.display(),
                model.config.encoder.vocab_size,
                index.vocab.len()
            )));
        }
        members.push(EnsembleMember {
            window: entry.window,
            model,
        });
    }
    EnsembleModel::new(members, index.combine, index.vocab)
        .map_err(|e| CliError::usage(format!("{}: {e}", index_path.display())))
}
