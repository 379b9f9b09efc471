use std::path::PathBuf;

use clap::{Args, ValueEnum};

use sarcasm_core::dataset::{label_counts, split as split_records, to_jsonl};
use sarcasm_core::synthetic::{cra_fixture, nsp_corpus, separable_corpus};

use super::{load_config, load_records};
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::Stage;

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `data.split.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `data.split.train_fraction`.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Keep label proportions equal in both parts.
    #[arg(long)]
    pub stratify: bool,
}

pub fn split(args: SplitArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("split");
    let mut cfg = load_config(&mut stage, args.config.as_ref())?;
    let spec = &mut cfg.data.split;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(f) = args.train_fraction {
        spec.train_fraction = f;
    }
    spec.stratify |= args.stratify;
    cfg.validate()?;
    stage.config(&cfg.data.split);

    let records = load_records(&mut stage, &args.input, cfg.data.split.stratify)?;
    let (train, valid) = split_records(&records, &cfg.data.split)?;
    stage.write("train.jsonl", to_jsonl(&train));
    stage.write("valid.jsonl", to_jsonl(&valid));
    stage.commit(&args.out)?;
    println!("train {}  valid {}", train.len(), valid.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Labels decided by a marker token in the response.
    Separable,
    /// Labeled and unlabeled threads with context cues, plus true labels.
    Cra,
    /// Topic-marked dialogues for next-sentence training.
    Nsp,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Records (labeled records for `cra`).
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub n_unlabeled: usize,
    #[arg(long, default_value_t = 20)]
    pub topics: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.n < 2 {
        return Err(CliError::usage("--n must be at least 2"));
    }
    let mut stage = Stage::new("synth");
    stage.config(&serde_json::json!({
        "kind": format!("{:?}", args.kind).to_lowercase(),
        "n": args.n,
        "n_unlabeled": args.n_unlabeled,
        "topics": args.topics,
        "seed": args.seed,
    }));
    match args.kind {
        SynthKind::Separable => {
            let recs = separable_corpus(args.n, args.seed);
            let [neg, pos] = label_counts(&recs);
            stage.write("corpus.jsonl", to_jsonl(&recs));
            stage.commit(&args.out)?;
            println!("corpus {}  (SARCASM {pos}, NOT_SARCASM {neg})", recs.len());
        }
        SynthKind::Nsp => {
            if args.topics == 0 {
                return Err(CliError::usage("--topics must be at least 1"));
            }
            let recs = nsp_corpus(args.n, args.topics, args.seed);
            stage.write("corpus.jsonl", to_jsonl(&recs));
            stage.commit(&args.out)?;
            println!("corpus {}", recs.len());
        }
        SynthKind::Cra => {
            let fx = cra_fixture(args.n, args.n_unlabeled, args.seed);
            stage.write("labeled.jsonl", to_jsonl(&fx.labeled));
            stage.write("unlabeled.jsonl", to_jsonl(&fx.unlabeled));
            stage.write_json("truth.json", &fx.truth);
            stage.commit(&args.out)?;
            println!("labeled {}  unlabeled {}", fx.labeled.len(), fx.unlabeled.len());
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct DefaultConfigArgs {
    /// Sizes and rates that train in minutes on one core.
    #[arg(long)]
    pub desk: bool,
}

pub fn default_config(args: DefaultConfigArgs) -> Result<(), CliError> {
    let cfg = if args.desk {
        PipelineConfig::desk()
    } else {
        PipelineConfig::default()
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&cfg).expect("configs serialize")
    );
    Ok(())
}
