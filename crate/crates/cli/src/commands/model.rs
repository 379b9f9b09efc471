use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use sarcasm_core::dataset::{build_vocab, DialogueRecord, Label, WindowSize};
use sarcasm_core::eval::{confusion, metrics, report, ReportStyle, MetricReport};
use sarcasm_core::layers::gradcheck::{standard_suite, SuiteSizes};
use sarcasm_core::layers::ModelConfig;
use sarcasm_core::tensor::gradcheck::GradCheckConfig;
use sarcasm_core::training::{
    compare_pooling as run_comparison, ensemble_predict_all, train_context_ensemble,
    EnsembleMember, EnsembleModel, TrainOutcome,
};

use super::{jsonl, load_config, load_records, window_sizes};
use crate::artifacts::{load_ensemble, member_file, queue_ensemble};
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::Stage;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labeled training records.
    #[arg(long)]
    pub data: PathBuf,
    /// Labeled validation records for early stopping.
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `training.window_sizes`, e.g. `1,2,3,max`.
    #[arg(long)]
    pub window_sizes: Option<String>,
    /// Overrides `training.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Effective configuration after command-line overrides, with the model
/// sized to the vocabulary.
fn training_setup(
    stage: &mut Stage,
    config: Option<&PathBuf>,
    windows: Option<&str>,
    seed: Option<u64>,
) -> Result<PipelineConfig, CliError> {
    let mut cfg = load_config(stage, config)?;
    if let Some(w) = window_sizes(windows)? {
        cfg.training.window_sizes = w;
    }
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct MemberSummary {
    window: WindowSize,
    best_epoch: usize,
    best_valid_f1: f64,
    epochs_run: usize,
    checkpoint: String,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("train");
    let mut cfg = training_setup(
        &mut stage,
        args.config.as_ref(),
        args.window_sizes.as_deref(),
        args.seed,
    )?;
    let train_recs = load_records(&mut stage, &args.data, true)?;
    let valid_recs = load_records(&mut stage, &args.valid, true)?;
    let vocab = build_vocab(&train_recs, cfg.data.min_freq)?;
    cfg.model.encoder.vocab_size = vocab.len();
    cfg.model.validate()?;
    stage.config(&cfg);

    let out = train_context_ensemble(&train_recs, &valid_recs, &cfg.model, &vocab, &cfg.training)?;

    let mut log = Vec::new();
    for (window, o) in &out.members {
        for rec in &o.history {
            let mut row = serde_json::to_value(rec).expect("records serialize");
            row["window"] = serde_json::to_value(window).expect("windows serialize");
            log.push(row);
        }
    }
    let last = EnsembleModel::new(
        out.members
            .iter()
            .map(|(w, o)| EnsembleMember {
                window: *w,
                model: o.last.clone(),
            })
            .collect(),
        out.model.combine,
        vocab.clone(),
    )?;
    let members: Vec<MemberSummary> = out
        .members
        .iter()
        .map(|(w, o): &(WindowSize, TrainOutcome)| MemberSummary {
            window: *w,
            best_epoch: o.best_epoch,
            best_valid_f1: o.best_f1,
            epochs_run: o.history.len(),
            checkpoint: format!("best/{}", member_file(*w)),
        })
        .collect();

    stage.write_json("config.json", &cfg);
    stage.write("metrics.jsonl", jsonl(&log));
    queue_ensemble(&mut stage, "best", &out.model);
    queue_ensemble(&mut stage, "final", &last);
    stage.write_json(
        "summary.json",
        &serde_json::json!({
            "valid": out.valid_report,
            "members": members,
            "vocab_size": vocab.len(),
            "train_records": train_recs.len(),
            "valid_records": valid_recs.len(),
        }),
    );
    stage.commit(&args.out)?;
    for m in &members {
        println!(
            "window {}: best epoch {} of {}, valid macro-F1 {:.4}",
            m.window, m.best_epoch, m.epochs_run, m.best_valid_f1
        );
    }
    println!("ensemble valid macro-F1 {:.4}", out.valid_report.macro_avg.f1);
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Ensemble directory, e.g. `<run>/best`.
    #[arg(long)]
    pub model: PathBuf,
    /// Records to score; labels are ignored.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Prediction {
    id: String,
    label: Label,
    probabilities: BTreeMap<Label, f64>,
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("predict");
    let model = load_ensemble(&mut stage, &args.model)?;
    let records = load_records(&mut stage, &args.data, false)?;
    let preds = ensemble_predict_all(&model, &records)?;
    let rows = records.iter().zip(&preds).map(|(r, (label, p))| Prediction {
        id: r.id.clone(),
        label: *label,
        probabilities: BTreeMap::from([(Label::NotSarcasm, p[0]), (Label::Sarcasm, p[1])]),
    });
    stage.write("predictions.jsonl", jsonl(rows));
    stage.commit(&args.out)?;
    let positive = preds.iter().filter(|(l, _)| *l == Label::Sarcasm).count();
    println!("{} predictions ({positive} SARCASM)", preds.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output of `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Labeled records; every id needs a prediction.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn render(r: &MetricReport) -> String {
    format!(
        "{}\n{}",
        report(r, ReportStyle::Table2),
        report(r, ReportStyle::Plain)
    )
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("eval");
    let text = stage.read_string(&args.predictions)?;
    let mut by_id: HashMap<String, Label> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line).map_err(|e| {
            CliError::usage(format!("{}: line {}: {e}", args.predictions.display(), i + 1))
        })?;
        if by_id.insert(p.id.clone(), p.label).is_some() {
            return Err(CliError::usage(format!(
                "{}: duplicate id {}",
                args.predictions.display(),
                p.id
            )));
        }
    }
    let gold_recs: Vec<DialogueRecord> = load_records(&mut stage, &args.gold, true)?;
    let mut preds = Vec::with_capacity(gold_recs.len());
    let mut gold = Vec::with_capacity(gold_recs.len());
    for r in &gold_recs {
        let p = by_id
            .get(&r.id)
            .ok_or_else(|| CliError::usage(format!("no prediction for id {}", r.id)))?;
        preds.push(*p);
        gold.push(r.label.expect("labeled parse"));
    }
    let m = metrics(&confusion(&preds, &gold).map_err(|e| CliError::usage(e.to_string()))?);
    let rendered = render(&m);
    stage.write("report.txt", rendered.clone());
    stage.write_json("report.json", &m);
    stage.commit(&args.out)?;
    print!("{rendered}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check layers at the sizes of this configuration's model instead of
    /// the small default sizes.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct LayerSummary<'a> {
    layer: &'a str,
    passed: bool,
    max_relative_error: f64,
}

pub fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if !(args.epsilon > 0.0 && args.tolerance > 0.0) {
        return Err(CliError::usage("--epsilon and --tolerance must be positive"));
    }
    let mut stage = Stage::new("gradcheck");
    let sizes = match &args.config {
        Some(_) => {
            let cfg = load_config(&mut stage, args.config.as_ref())?;
            let mut model: ModelConfig = cfg.model.clone();
            model.encoder.vocab_size = model.encoder.vocab_size.max(12);
            SuiteSizes::from_model(&model)
        }
        None => SuiteSizes::default(),
    };
    let gc = GradCheckConfig {
        epsilon: args.epsilon,
        tolerance: args.tolerance,
        ..GradCheckConfig::default()
    };
    stage.config(&serde_json::json!({ "sizes": sizes, "seed": args.seed, "check": gc }));
    let checks = standard_suite(&sizes, args.seed, gc)?;
    let summary: Vec<LayerSummary> = checks
        .iter()
        .map(|c| LayerSummary {
            layer: &c.layer,
            passed: c.passed(),
            max_relative_error: c.max_relative_error(),
        })
        .collect();
    stage.write_json(
        "gradcheck.json",
        &serde_json::json!({ "layers": summary, "details": checks }),
    );
    stage.commit(&args.out)?;
    for s in &summary {
        println!(
            "{:<10} {}  max relative error {:.3e}",
            s.layer,
            if s.passed { "ok  " } else { "FAIL" },
            s.max_relative_error
        );
    }
    let failed: Vec<&str> = summary.iter().filter(|s| !s.passed).map(|s| s.layer).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "gradient check failed for {} at tolerance {:e}",
            failed.join(", "),
            args.tolerance
        )))
    }
}

#[derive(Debug, Args)]
pub struct ComparePoolingArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub window_sizes: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn compare_pooling(args: ComparePoolingArgs) -> Result<(), CliError> {
    let mut stage = Stage::new("compare-pooling");
    let mut cfg = training_setup(
        &mut stage,
        args.config.as_ref(),
        args.window_sizes.as_deref(),
        args.seed,
    )?;
    let train_recs = load_records(&mut stage, &args.data, true)?;
    let valid_recs = load_records(&mut stage, &args.valid, true)?;
    let vocab = build_vocab(&train_recs, cfg.data.min_freq)?;
    cfg.model.encoder.vocab_size = vocab.len();
    cfg.model.validate()?;
    stage.config(&cfg);

    let cmp = run_comparison(&train_recs, &valid_recs, &cfg.model, &vocab, &cfg.training)?;
    let table = cmp.report();
    let rows: Vec<serde_json::Value> = cmp
        .rows
        .iter()
        .map(|(mode, r)| serde_json::json!({ "pooling": mode.name(), "report": r }))
        .collect();
    stage.write("pooling.txt", table.clone());
    stage.write_json("pooling.json", &rows);
    stage.commit(&args.out)?;
    print!("{table}");
    Ok(())
}
