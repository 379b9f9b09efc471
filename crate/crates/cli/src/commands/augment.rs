use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use sarcasm_core::augmentation::{
    balance_with_positives, build_response_index, cra_augment_all, derive_context_negatives,
    train_nsp_scorer, FileEncoder, HttpTranslator, IdentityTranslator, ModelMeanEncoder,
    NspEpoch, NspScorer, NspTrainOutcome, ResponseEncoder, SynonymTranslator, TfIdfEncoder,
    Translator,
};
use sarcasm_core::dataset::{label_counts, to_jsonl, DialogueRecord};
use sarcasm_core::layers::checkpoint;

use super::{jsonl, load_config, load_records};
use crate::config::{PipelineConfig, ResponseEncoderKind, TranslatorKind};
use crate::error::CliError;
use crate::manifest::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Method {
    /// Last context turn promoted to response, labeled NOT_SARCASM.
    Negatives,
    /// Back-translated SARCASM responses until the classes balance.
    Backtranslation,
    /// Labels transferred to unlabeled threads by retrieval and reranking.
    Cra,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    /// Unlabeled threads for CRA.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Trained next-sentence scorer for CRA.
    #[arg(long, conflicts_with = "train_nsp")]
    pub nsp_checkpoint: Option<PathBuf>,
    /// Train the scorer on the labeled dialogues first; it is saved as nsp.ckpt.
    #[arg(long)]
    pub train_nsp: bool,
    /// Methods to apply; defaults to all that the inputs allow.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Continue without back-translated positives.
    #[arg(long)]
    pub skip_backtranslation: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Serialize)]
struct AugmentSummary {
    source: usize,
    context_negative: usize,
    context_negative_skipped: usize,
    back_translation: usize,
    translation_failures: usize,
    residual_imbalance: usize,
    unlabeled: usize,
    cra: usize,
    cra_rejected: usize,
    cra_truncated_pairs: usize,
    nsp: Option<NspSummary>,
    /// Label counts of the output corpus, NOT_SARCASM first.
    output_labels: [usize; 2],
}

#[derive(Debug, Serialize)]
struct NspSummary {
    trained: bool,
    best_epoch: Option<usize>,
    valid_accuracy: Option<f64>,
}

fn translator(cfg: &PipelineConfig) -> Result<Box<dyn Translator>, CliError> {
    let t = &cfg.augmentation.translator;
    Ok(match t.kind {
        TranslatorKind::Identity => Box::new(IdentityTranslator),
        TranslatorKind::Synonym => Box::new(SynonymTranslator::default()),
        TranslatorKind::Http => Box::new(HttpTranslator::from_env(t.http.clone())?),
    })
}

pub fn augment(args: AugmentArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("augment");
    let cfg = load_config(&mut stage, args.config.as_ref())?;
    stage.config(&cfg.augmentation);

    let explicit = !args.methods.is_empty();
    let mut methods = if explicit {
        args.methods.clone()
    } else {
        vec![Method::Negatives, Method::Backtranslation, Method::Cra]
    };
    methods.sort();
    methods.dedup();
    if args.skip_backtranslation {
        methods.retain(|&m| m != Method::Backtranslation);
    }
    let want_cra = methods.contains(&Method::Cra);
    if want_cra && args.unlabeled.is_none() {
        if explicit {
            return Err(CliError::usage("--methods cra needs --unlabeled"));
        }
        methods.retain(|&m| m != Method::Cra);
    }
    let want_cra = methods.contains(&Method::Cra);
    if want_cra && args.nsp_checkpoint.is_none() && !args.train_nsp {
        return Err(CliError::usage(
            "CRA needs a scorer: pass --nsp-checkpoint or --train-nsp",
        ));
    }
    if cfg.augmentation.response_encoder.kind == ResponseEncoderKind::File && want_cra {
        let path = cfg.augmentation.response_encoder.path.as_deref().expect("validated");
        stage.read(std::path::Path::new(path))?;
    }
    let translator = if methods.contains(&Method::Backtranslation) {
        Some(translator(&cfg)?)
    } else {
        None
    };

    let labeled = load_records(&mut stage, &args.labeled, true)?;
    let unlabeled = match (&args.unlabeled, want_cra) {
        (Some(p), true) => load_records(&mut stage, p, false)?,
        _ => Vec::new(),
    };
    let loaded_scorer = match (&args.nsp_checkpoint, want_cra) {
        (Some(p), true) => {
            let bytes = stage.read(p)?;
            let (params, extra) = checkpoint::decode::<f64>(&bytes)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            Some(
                NspScorer::from_checkpoint(&params, &extra)
                    .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?,
            )
        }
        _ => None,
    };

    let mut summary = AugmentSummary {
        source: labeled.len(),
        unlabeled: unlabeled.len(),
        ..Default::default()
    };
    let mut output: Vec<DialogueRecord> = labeled.clone();

    if methods.contains(&Method::Negatives) {
        let neg = derive_context_negatives(&labeled)?;
        summary.context_negative = neg.records.len();
        summary.context_negative_skipped = neg.skipped;
        output.extend(neg.records);
    }
    if let Some(t) = &translator {
        let before = output.len();
        let bal = balance_with_positives(&output, &cfg.augmentation.languages, t.as_ref())?;
        summary.back_translation = bal.added;
        summary.translation_failures = bal.failures.len();
        summary.residual_imbalance = bal.residual_imbalance;
        for f in bal.failures.iter().take(3) {
            eprintln!("warning: translation to {} failed: {}", f.language, f.error);
        }
        output.extend(bal.records.into_iter().skip(before));
    }
    if want_cra {
        let scorer = match loaded_scorer {
            Some(s) => {
                summary.nsp = Some(NspSummary {
                    trained: false,
                    best_epoch: None,
                    valid_accuracy: None,
                });
                s
            }
            None => {
                let out = train_nsp_scorer(&labeled, &cfg.augmentation.nsp)?;
                summary.nsp = Some(NspSummary {
                    trained: true,
                    best_epoch: Some(out.best_epoch),
                    valid_accuracy: Some(out.valid_accuracy),
                });
                queue_scorer(&mut stage, &out);
                out.scorer
            }
        };
        let encoder = response_encoder(&cfg, &labeled, &scorer)?;
        let index = build_response_index(&labeled, encoder.as_ref())?;
        let cra = cra_augment_all(
            &unlabeled,
            &index,
            encoder.as_ref(),
            &scorer,
            &cfg.augmentation.cra,
        )?;
        summary.cra = cra.records.len();
        summary.cra_rejected = cra.rejected.len();
        summary.cra_truncated_pairs = cra.truncated_pairs;
        output.extend(cra.records);
    }
    summary.output_labels = label_counts(&output);

    stage.write("augmented.jsonl", to_jsonl(&output));
    stage.write_json("summary.json", &summary);
    stage.commit(&args.out)?;
    println!(
        "source {}  context_negative {}  back_translation {}  cra {} (rejected {})  total {}",
        summary.source,
        summary.context_negative,
        summary.back_translation,
        summary.cra,
        summary.cra_rejected,
        output.len()
    );
    Ok(())
}

fn response_encoder(
    cfg: &PipelineConfig,
    labeled: &[DialogueRecord],
    scorer: &NspScorer,
) -> Result<Box<dyn ResponseEncoder>, CliError> {
    let rc = &cfg.augmentation.response_encoder;
    Ok(match rc.kind {
        ResponseEncoderKind::Tfidf => {
            let docs: Vec<&str> = labeled.iter().map(|r| r.response.as_str()).collect();
            Box::new(TfIdfEncoder::fit(&docs))
        }
        ResponseEncoderKind::Model => Box::new(ModelMeanEncoder {
            encoder: scorer.model.encoder.clone(),
            vocab: scorer.vocab.clone(),
        }),
        ResponseEncoderKind::File => {
            let path = rc.path.as_deref().expect("validated");
            Box::new(FileEncoder::from_path(std::path::Path::new(path))?)
        }
    })
}

fn queue_scorer(stage: &mut Stage, out: &NspTrainOutcome) {
    stage.write(
        "nsp.ckpt",
        checkpoint::encode(&out.scorer.model.to_params(), &out.scorer.checkpoint_extra()),
    );
    stage.write("nsp_metrics.jsonl", jsonl(out.history.iter().map(|h: &NspEpoch| h)));
}

#[derive(Debug, Args)]
pub struct TrainNspArgs {
    /// Dialogues whose responses serve as true continuations; labels are
    /// not used.
    #[arg(long)]
    pub dialogues: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_nsp(args: TrainNspArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("train-nsp");
    let cfg = load_config(&mut stage, args.config.as_ref())?;
    stage.config(&cfg.augmentation.nsp);
    let dialogues = load_records(&mut stage, &args.dialogues, false)?;
    let out = train_nsp_scorer(&dialogues, &cfg.augmentation.nsp)?;
    queue_scorer(&mut stage, &out);
    stage.write_json(
        "summary.json",
        &serde_json::json!({
            "best_epoch": out.best_epoch,
            "valid_accuracy": out.valid_accuracy,
            "initial_loss": out.initial_loss,
            "train_pairs": out.train_pairs,
            "valid_pairs": out.valid_pairs,
            "vocab_size": out.scorer.vocab.len(),
        }),
    );
    stage.commit(&args.out)?;
    println!(
        "best epoch {}  valid pair accuracy {:.4}",
        out.best_epoch, out.valid_accuracy
    );
    Ok(())
}
