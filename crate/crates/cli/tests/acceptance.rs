//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion. Library-level
//! criteria call the core crate directly; pipeline criteria drive the
//! `sarcasm` binary end to end. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use sarcasm_core::augmentation::{retrieve_topk, IndexEntry, ResponseIndex};
use sarcasm_core::dataset::{split, DialogueRecord, Label, SplitSpec};
use sarcasm_core::eval::{metrics, Confusion};
use sarcasm_core::layers::gradcheck::SuiteSizes;
use sarcasm_core::layers::{
    BiLstmConfig, EncoderConfig, Mode, ModelConfig, ModelInput, NextVlad, NextVladConfig,
    PoolingConfig, PoolingMode, SarcasmModel,
};
use sarcasm_core::tensor::Tensor;
use sarcasm_core::training::{cyclic_lr, CyclicLRConfig};

type Check = Result<String, String>;
type Criterion = (&'static str, &'static str, fn(&Work) -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

struct Work {
    root: PathBuf,
    desk_config: PathBuf,
}

impl Work {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

/// Runs the binary; a nonzero exit is an error carrying stderr.
fn sarcasm<I, S>(args: I) -> Result<String, String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let args: Vec<_> = args.into_iter().map(|a| a.as_ref().to_os_string()).collect();
    let out = Command::new(env!("CARGO_BIN_EXE_sarcasm"))
        .args(&args)
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`sarcasm {}` exited {:?}: {}",
            args.iter()
                .map(|a| a.to_string_lossy())
                .collect::<Vec<_>>()
                .join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_json(path: &Path) -> Result<Value, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display())))
        .collect()
}

fn write_jsonl(path: &Path, rows: &[Value]) -> Result<(), String> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn method(row: &Value) -> Option<&str> {
    row.get("provenance")?.get("method")?.as_str()
}

fn macro_f1(report: &Value) -> Result<f64, String> {
    report["macro"]["f1"]
        .as_f64()
        .ok_or_else(|| "report has no macro.f1".to_string())
}

fn p(path: &Path) -> &OsStr {
    path.as_os_str()
}

// C1 ------------------------------------------------------------------------

fn scope(w: &Work) -> Check {
    let full: Value = serde_json::from_str(&sarcasm(["default-config"])?)
        .map_err(|e| e.to_string())?;
    let t = &full["training"];
    ensure!(t["batch_size"] == 4, "default batch size {}", t["batch_size"]);
    ensure!(
        t["lr"]["base_lr"] == 1e-6 && t["lr"]["max_lr"] == 2e-5,
        "default lr range {} .. {}",
        t["lr"]["base_lr"],
        t["lr"]["max_lr"]
    );
    ensure!(
        t["lr"]["momentum_high"] == 0.825 && t["lr"]["momentum_low"] == 0.725,
        "default momentum range"
    );
    let desk = read_json(&w.desk_config)?;
    ensure!(
        desk["model"]["encoder"]["hidden_dim"].as_u64() < full["model"]["encoder"]["hidden_dim"].as_u64(),
        "desk preset is not smaller than the default model"
    );
    Ok(format!(
        "default config keeps full-scale settings (encoder {}x{}, batch 4, lr 1e-6..2e-5); \
         criteria below run the desk preset (encoder {}x{})",
        full["model"]["encoder"]["num_layers"],
        full["model"]["encoder"]["hidden_dim"],
        desk["model"]["encoder"]["num_layers"],
        desk["model"]["encoder"]["hidden_dim"]
    ))
}

// C2 ------------------------------------------------------------------------

fn gradient_suite(w: &Work) -> Check {
    let s = SuiteSizes::default();
    ensure!(
        s.encoder.num_layers == 1 && s.encoder.hidden_dim == 8,
        "encoder sizes {:?}",
        s.encoder
    );
    ensure!(
        s.bilstm.num_layers == 2 && s.bilstm.hidden_dim == 6 && s.bilstm.dropout == 0.0,
        "bilstm sizes {:?}",
        s.bilstm
    );
    let v = &s.nextvlad;
    ensure!(
        v.input_dim == 16 && v.expansion == 2 && v.groups == 4 && v.clusters == 8,
        "nextvlad sizes {v:?}"
    );
    let start = Instant::now();
    let out = w.path("gradcheck");
    sarcasm([
        OsStr::new("gradcheck"),
        OsStr::new("--epsilon"),
        OsStr::new("1e-5"),
        OsStr::new("--tolerance"),
        OsStr::new("1e-4"),
        OsStr::new("--out"),
        p(&out),
    ])?;
    let secs = start.elapsed().as_secs_f64();
    let report = read_json(&out.join("gradcheck.json"))?;
    let layers = report["layers"].as_array().ok_or("no layers")?;
    let names: Vec<&str> = layers.iter().filter_map(|l| l["layer"].as_str()).collect();
    ensure!(names.len() == 4, "layers checked: {names:?}");
    let mut worst = 0.0f64;
    for l in layers {
        let err = l["max_relative_error"].as_f64().ok_or("missing error")?;
        ensure!(l["passed"] == true && err <= 1e-4, "{} max relative error {err:e}", l["layer"]);
        worst = worst.max(err);
    }
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "{} pass, worst relative error {worst:.2e} <= 1e-4, {secs:.1}s < 60s",
        names.join("/")
    ))
}

// C3 ------------------------------------------------------------------------

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("shape matches data")
}

fn shapes_and_normalization(_: &Work) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..5 {
        let heads = rng.gen_range(1..=2);
        let d = heads * rng.gen_range(2..=4);
        let lstm = rng.gen_range(2..=5);
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                num_layers: rng.gen_range(1..=2),
                hidden_dim: d,
                num_heads: heads,
                ffn_dim: 2 * d,
                max_seq_len: 8,
                vocab_size: 15,
            },
            bilstm: BiLstmConfig {
                num_layers: 2,
                hidden_dim: lstm,
                dropout: 0.25,
            },
            pooling: PoolingConfig {
                mode: PoolingMode::ALL[trial % 3],
                groups: rng.gen_range(1..=2),
                expansion: 2,
                clusters: rng.gen_range(1..=4),
                output_dim: rng.gen_range(1..=7),
            },
        };
        let model = SarcasmModel::<f64>::seeded(&cfg, trial as u64).map_err(|e| e.to_string())?;
        let seq = rng.gen_range(1..=6);
        let ids: Vec<u32> = (0..seq).map(|_| rng.gen_range(0..15)).collect();
        let (h, _) = model.encoder.forward(&ids, Mode::Eval).map_err(|e| e.to_string())?;
        ensure!(h.shape() == [seq, d], "trial {trial}: encoder {:?}", h.shape());
        let (s, _) = model
            .bilstm
            .forward(&h, Mode::Eval, &mut rng)
            .map_err(|e| e.to_string())?;
        ensure!(s.shape() == [seq, 2 * lstm], "trial {trial}: bilstm {:?}", s.shape());
        let pass = model
            .forward(&ModelInput::Tokens(ids), Mode::Train, &mut rng)
            .map_err(|e| e.to_string())?;
        ensure!(
            pass.pooled.shape() == [cfg.pooled_dim()] && pass.probs.shape() == [2],
            "trial {trial}: pooled {:?}, probs {:?}",
            pass.pooled.shape(),
            pass.probs.shape()
        );
        ensure!(
            (pass.probs.sum() - 1.0).abs() <= 1e-12,
            "trial {trial}: probabilities sum to {}",
            pass.probs.sum()
        );
    }

    let vcfg = NextVladConfig {
        input_dim: 16,
        expansion: 2,
        groups: 4,
        clusters: 8,
        output_dim: 32,
    };
    let vlad = NextVlad::<f64>::new(&vcfg, &mut rng).map_err(|e| e.to_string())?;
    let mut worst_assign = 0.0f64;
    for _ in 0..20 {
        let t = rng.gen_range(1..=10);
        let (_, cache) = vlad
            .forward(&random_tensor(t, 16, &mut rng))
            .map_err(|e| e.to_string())?;
        for per_group in cache.assignment().data().chunks(vcfg.clusters) {
            worst_assign = worst_assign.max((per_group.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst_assign <= 1e-12, "assignment sum off by {worst_assign:e}");

    let mut worst_dup = 0.0f64;
    for _ in 0..20 {
        let row = random_tensor(1, 16, &mut rng);
        let copies = rng.gen_range(2..=6);
        let mut rep = Tensor::zeros(&[copies, 16]);
        for t in 0..copies {
            rep.row_mut(t).copy_from_slice(row.row(0));
        }
        let (_, one) = vlad.forward(&row).map_err(|e| e.to_string())?;
        let (_, many) = vlad.forward(&rep).map_err(|e| e.to_string())?;
        for (a, b) in one.descriptor().data().iter().zip(many.descriptor().data()) {
            worst_dup = worst_dup.max((a - b).abs());
        }
    }
    ensure!(worst_dup <= 1e-9, "duplicated steps move the descriptor by {worst_dup:e}");
    Ok(format!(
        "5 random stacks keep their shapes, outputs sum to 1 within 1e-12, assignments within \
         {worst_assign:.1e}, duplicated steps move the descriptor by {worst_dup:.1e}"
    ))
}

// C4 ------------------------------------------------------------------------

fn schedule(_: &Work) -> Check {
    let mut worst = 0.0f64;
    for step in [1usize, 2, 3, 17, 500] {
        let c = CyclicLRConfig {
            step_size: Some(step),
            ..CyclicLRConfig::default()
        };
        ensure!(cyclic_lr(0, &c) == (1e-6, 0.825), "iteration 0: {:?}", cyclic_lr(0, &c));
        let (lr, m) = cyclic_lr(step, &c);
        ensure!(lr == c.max_lr && m == 0.725, "iteration {step}: ({lr}, {m})");
        for it in 0..10 * 2 * step {
            let (a, am) = cyclic_lr(it, &c);
            let (b, bm) = cyclic_lr(it + 2 * step, &c);
            worst = worst.max((a - b).abs()).max((am - bm).abs());
            ensure!(a >= c.base_lr && a <= c.max_lr, "lr {a} out of range");
            ensure!(am >= c.momentum_low && am <= c.momentum_high, "momentum {am} out of range");
        }
    }
    ensure!(worst <= 1e-15, "period deviation {worst:e}");
    Ok(format!(
        "(1e-6, 0.825) at 0, (max_lr, 0.725) at step_size, period 2*step_size over 10 cycles \
         (max deviation {worst:.1e})"
    ))
}

// C5 ------------------------------------------------------------------------

fn linear_scan(entries: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|(id, e)| {
            let en = norm(e);
            let dot: f64 = e.iter().zip(query).map(|(a, b)| a * b).sum();
            let c = if en == 0.0 || qn == 0.0 { 0.0 } else { (dot / (en * qn)).clamp(-1.0, 1.0) };
            (id.clone(), c)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn prf(tp: f64, fp: f64, fn_: f64) -> [f64; 3] {
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    [p, r, f]
}

fn oracles(_: &Work) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut ties = 0usize;
    for trial in 0..100 {
        // Few distinct integer vectors under shuffled ids make exact ties common.
        let distinct: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..32).map(|_| rng.gen_range(-1i32..=1) as f64).collect())
            .collect();
        let mut ids: Vec<usize> = (0..1000).collect();
        ids.shuffle(&mut rng);
        let entries: Vec<(String, Vec<f64>)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (format!("r{id:04}"), distinct[i % distinct.len()].clone()))
            .collect();
        let mut index = ResponseIndex::new(32);
        for (id, e) in &entries {
            index
                .push(IndexEntry {
                    record_id: id.clone(),
                    label: Label::Sarcasm,
                    response: id.clone(),
                    embedding: e.clone(),
                })
                .map_err(|e| e.to_string())?;
        }
        let query: Vec<f64> = if trial % 4 == 0 {
            entries[rng.gen_range(0..1000)].1.clone()
        } else {
            (0..32).map(|_| rng.gen_range(-2i32..=2) as f64).collect()
        };
        let got = retrieve_topk(&index, &query, 10).map_err(|e| e.to_string())?;
        let want = linear_scan(&entries, &query, 10);
        ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
        ensure!(got.len() == 10, "trial {trial}: {} results", got.len());
        for (g, (id, c)) in got.iter().zip(&want) {
            ensure!(g.record_id == *id, "trial {trial}: got {} expected {id}", g.record_id);
            ensure!(g.cosine == *c, "trial {trial}: cosine {} vs {c}", g.cosine);
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = Confusion {
            tp: rng.gen_range(0..60),
            fp: rng.gen_range(0..60),
            fn_: rng.gen_range(0..60),
            tn: rng.gen_range(0..60),
        };
        let m = metrics(&c);
        let s = prf(c.tp as f64, c.fp as f64, c.fn_ as f64);
        let n = prf(c.tn as f64, c.fn_ as f64, c.fp as f64);
        let got = [
            m.sarcasm.precision,
            m.sarcasm.recall,
            m.sarcasm.f1,
            m.not_sarcasm.precision,
            m.not_sarcasm.recall,
            m.not_sarcasm.f1,
            m.macro_avg.precision,
            m.macro_avg.recall,
            m.macro_avg.f1,
        ];
        let want = [
            s[0],
            s[1],
            s[2],
            n[0],
            n[1],
            n[2],
            (s[0] + n[0]) / 2.0,
            (s[1] + n[1]) / 2.0,
            (s[2] + n[2]) / 2.0,
        ];
        for (g, w) in got.iter().zip(want) {
            ensure!(g.is_finite(), "{c:?}: non-finite metric");
            worst = worst.max((g - w).abs());
        }
    }
    ensure!(worst <= 1e-12, "metric deviation {worst:e}");

    let mut counts = Vec::new();
    for (n, want_train, want_valid) in [(5000usize, 4000usize, 1000usize), (4400, 3520, 880)] {
        let recs: Vec<DialogueRecord> = (0..n)
            .map(|i| DialogueRecord::new(format!("{i}"), vec![], "x", Some(Label::from_index(i % 2).unwrap())))
            .collect();
        let (tr, va) = split(&recs, &SplitSpec::default()).map_err(|e| e.to_string())?;
        ensure!(
            tr.len() == want_train && va.len() == want_valid,
            "{n} records split {}/{}",
            tr.len(),
            va.len()
        );
        counts.push(format!("{}/{}", tr.len(), va.len()));
    }
    Ok(format!(
        "top-k equals linear scan on 100 trials ({ties} tied neighbours), metrics within \
         {worst:.1e} on 1000 matrices, splits {}",
        counts.join(" and ")
    ))
}

// C6 ------------------------------------------------------------------------

fn augmentation_contracts(w: &Work) -> Check {
    let fixture = w.path("c6-fixture");
    sarcasm([
        OsStr::new("synth"),
        OsStr::new("--kind"),
        OsStr::new("cra"),
        OsStr::new("--n"),
        OsStr::new("200"),
        OsStr::new("--n-unlabeled"),
        OsStr::new("100"),
        OsStr::new("--seed"),
        OsStr::new("7"),
        OsStr::new("--out"),
        p(&fixture),
    ])?;
    let out = w.path("c6-augment");
    let start = Instant::now();
    sarcasm([
        OsStr::new("augment"),
        OsStr::new("--config"),
        p(&w.desk_config),
        OsStr::new("--labeled"),
        p(&fixture.join("labeled.jsonl")),
        OsStr::new("--unlabeled"),
        p(&fixture.join("unlabeled.jsonl")),
        OsStr::new("--train-nsp"),
        OsStr::new("--out"),
        p(&out),
    ])?;
    let secs = start.elapsed().as_secs_f64();

    let truth = read_json(&fixture.join("truth.json"))?;
    let sources: BTreeMap<String, Value> = read_jsonl(&fixture.join("unlabeled.jsonl"))?
        .into_iter()
        .map(|r| (r["id"].as_str().unwrap_or_default().to_string(), r))
        .collect();
    let rows = read_jsonl(&out.join("augmented.jsonl"))?;
    let summary = read_json(&out.join("summary.json"))?;

    let negatives: Vec<&Value> = rows.iter().filter(|r| method(r) == Some("context_negative")).collect();
    ensure!(!negatives.is_empty(), "no context negatives");
    let bad_neg = negatives.iter().filter(|r| r["label"] != "NOT_SARCASM").count();
    ensure!(bad_neg == 0, "{bad_neg} context negatives are not NOT_SARCASM");

    let cra: Vec<&Value> = rows.iter().filter(|r| method(r) == Some("cra")).collect();
    ensure!(!cra.is_empty(), "no CRA samples");
    ensure!(
        summary["cra"].as_u64() == Some(cra.len() as u64)
            && summary["context_negative"].as_u64() == Some(negatives.len() as u64),
        "summary counts disagree with the corpus"
    );
    let mut correct = 0usize;
    for r in &cra {
        let prov = &r["provenance"];
        let src_id = prov["source_id"].as_str().ok_or("CRA sample without source")?;
        let src = sources.get(src_id).ok_or_else(|| format!("unknown source {src_id}"))?;
        ensure!(
            r["context"] == src["context"],
            "{src_id}: context changed"
        );
        ensure!(
            prov["cosine"].is_f64() && prov["nsp_confidence"].is_f64() && prov["candidate_id"].is_string(),
            "{src_id}: incomplete provenance {prov}"
        );
        if truth[src_id] == r["label"] {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / cra.len() as f64;
    ensure!(accuracy >= 0.8, "{correct}/{} CRA labels correct ({accuracy:.3})", cra.len());
    ensure!(secs < 120.0, "took {secs:.1}s");
    Ok(format!(
        "{} negatives all NOT_SARCASM; {} CRA samples keep source context and provenance; \
         {correct}/{} ({:.1}%) fixture-correct >= 80%; {secs:.1}s < 120s",
        negatives.len(),
        cra.len(),
        cra.len(),
        100.0 * accuracy
    ))
}

// C7 ------------------------------------------------------------------------

fn ckpt_bytes(run: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for sub in ["best", "final"] {
        let dir = run.join(sub);
        for entry in std::fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            out.insert(format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()), bytes);
        }
    }
    Ok(out)
}

fn train(w: &Work, data: &Path, valid: &Path, out: &Path) -> Result<(), String> {
    sarcasm([
        OsStr::new("train"),
        OsStr::new("--config"),
        p(&w.desk_config),
        OsStr::new("--data"),
        p(data),
        OsStr::new("--valid"),
        p(valid),
        OsStr::new("--out"),
        p(out),
    ])
    .map(drop)
}

fn predict_eval(model: &Path, gold: &Path, pred: &Path, report: &Path) -> Result<f64, String> {
    sarcasm([
        OsStr::new("predict"),
        OsStr::new("--model"),
        p(model),
        OsStr::new("--data"),
        p(gold),
        OsStr::new("--out"),
        p(pred),
    ])?;
    sarcasm([
        OsStr::new("eval"),
        OsStr::new("--predictions"),
        p(&pred.join("predictions.jsonl")),
        OsStr::new("--gold"),
        p(gold),
        OsStr::new("--out"),
        p(report),
    ])?;
    macro_f1(&read_json(&report.join("report.json"))?)
}

fn end_to_end(w: &Work) -> Check {
    let start = Instant::now();
    let corpus = w.path("c7-corpus");
    sarcasm([
        OsStr::new("synth"),
        OsStr::new("--kind"),
        OsStr::new("separable"),
        OsStr::new("--n"),
        OsStr::new("600"),
        OsStr::new("--seed"),
        OsStr::new("42"),
        OsStr::new("--out"),
        p(&corpus),
    ])?;
    let splits = w.path("c7-split");
    sarcasm([
        OsStr::new("split"),
        OsStr::new("--config"),
        p(&w.desk_config),
        OsStr::new("--train-fraction"),
        OsStr::new("0.8333333333333334"),
        OsStr::new("--input"),
        p(&corpus.join("corpus.jsonl")),
        OsStr::new("--out"),
        p(&splits),
    ])?;
    let (tr, va) = (splits.join("train.jsonl"), splits.join("valid.jsonl"));
    let n_train = read_jsonl(&tr)?.len();
    let n_valid = read_jsonl(&va)?.len();
    ensure!(n_train == 500 && n_valid == 100, "split {n_train}/{n_valid}");

    let run = w.path("c7-run");
    train(w, &tr, &va, &run)?;
    let f1 = predict_eval(&run.join("best"), &va, &w.path("c7-pred"), &w.path("c7-eval"))?;
    let secs = start.elapsed().as_secs_f64();
    let mut per_member: BTreeMap<String, usize> = BTreeMap::new();
    for row in read_jsonl(&run.join("metrics.jsonl"))? {
        *per_member.entry(row["window"].to_string()).or_default() += 1;
    }
    let epochs = per_member.values().copied().max().unwrap_or(0);
    let summary = read_json(&run.join("summary.json"))?;
    let train_f1 = macro_f1(&summary["valid"])?;
    let predictions = read_jsonl(&w.path("c7-pred").join("predictions.jsonl"))?.len();

    let rerun = w.path("c7-rerun");
    train(w, &tr, &va, &rerun)?;
    let a = ckpt_bytes(&run)?;
    let b = ckpt_bytes(&rerun)?;

    ensure!(f1 >= 0.95, "validation macro-F1 {f1:.4} < 0.95");
    ensure!(epochs <= 10, "a member ran {epochs} epochs");
    ensure!(secs < 300.0, "took {secs:.1}s");
    ensure!((f1 - train_f1).abs() <= 1e-9, "eval F1 {f1} vs train-time {train_f1}");
    ensure!(predictions == n_valid, "{predictions} predictions for {n_valid} records");
    ensure!(!a.is_empty() && a == b, "rerun checkpoints differ");
    Ok(format!(
        "500/100 split, {}-member ensemble macro-F1 {f1:.4} >= 0.95 in <= {epochs} epochs each, \
         {secs:.1}s < 300s, {} checkpoint files byte-identical on rerun",
        per_member.len(),
        a.len()
    ))
}

// C8 ------------------------------------------------------------------------

fn directional(w: &Work) -> Check {
    let fixture = w.path("c8-fixture");
    sarcasm([
        OsStr::new("synth"),
        OsStr::new("--kind"),
        OsStr::new("cra"),
        OsStr::new("--n"),
        OsStr::new("600"),
        OsStr::new("--n-unlabeled"),
        OsStr::new("0"),
        OsStr::new("--seed"),
        OsStr::new("8"),
        OsStr::new("--out"),
        p(&fixture),
    ])?;
    // An even split leaves the baseline short of data and gives a validation
    // set where one error moves F1 by well under the 0.01 tolerance.
    let splits = w.path("c8-split");
    sarcasm([
        OsStr::new("split"),
        OsStr::new("--config"),
        p(&w.desk_config),
        OsStr::new("--train-fraction"),
        OsStr::new("0.5"),
        OsStr::new("--input"),
        p(&fixture.join("labeled.jsonl")),
        OsStr::new("--out"),
        p(&splits),
    ])?;
    let valid = splits.join("valid.jsonl");
    let mut rows = read_jsonl(&splits.join("train.jsonl"))?;
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(30));
    let n_withheld = (rows.len() * 3).div_ceil(10);
    let withheld: Vec<Value> = rows[..n_withheld]
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.as_object_mut().expect("records are objects").remove("label");
            r
        })
        .collect();
    let kept = rows[n_withheld..].to_vec();
    let (kept_path, pool_path) = (w.path("c8-kept.jsonl"), w.path("c8-pool.jsonl"));
    write_jsonl(&kept_path, &kept)?;
    write_jsonl(&pool_path, &withheld)?;

    let base_run = w.path("c8-base");
    train(w, &kept_path, &valid, &base_run)?;
    let base = predict_eval(&base_run.join("best"), &valid, &w.path("c8-base-pred"), &w.path("c8-base-eval"))?;

    let aug = w.path("c8-augment");
    sarcasm([
        OsStr::new("augment"),
        OsStr::new("--config"),
        p(&w.desk_config),
        OsStr::new("--labeled"),
        p(&kept_path),
        OsStr::new("--unlabeled"),
        p(&pool_path),
        OsStr::new("--train-nsp"),
        OsStr::new("--methods"),
        OsStr::new("cra"),
        OsStr::new("--out"),
        p(&aug),
    ])?;
    let summary = read_json(&aug.join("summary.json"))?;
    let augmented = read_jsonl(&aug.join("augmented.jsonl"))?;
    let cra = augmented.iter().filter(|r| method(r) == Some("cra")).count();
    let other = augmented.iter().filter(|r| method(r).is_some_and(|m| m != "cra")).count();
    ensure!(
        summary["cra"].as_u64() == Some(cra as u64)
            && summary["source"].as_u64() == Some(kept.len() as u64),
        "summary counts disagree with the corpus: {summary}"
    );
    ensure!(other == 0, "{other} non-CRA samples with --methods cra");

    let aug_run = w.path("c8-aug");
    train(w, &aug.join("augmented.jsonl"), &valid, &aug_run)?;
    let with_cra = predict_eval(&aug_run.join("best"), &valid, &w.path("c8-aug-pred"), &w.path("c8-aug-eval"))?;
    ensure!(
        with_cra >= base - 0.01,
        "augmented macro-F1 {with_cra:.4} < unaugmented {base:.4} - 0.01"
    );
    Ok(format!(
        "{} kept + {n_withheld} withheld; per-method counts: source {}, cra {cra}, rejected {}; \
         macro-F1 {with_cra:.4} with CRA vs {base:.4} without (strictly better: {})",
        kept.len(),
        summary["source"],
        summary["cra_rejected"],
        if with_cra > base { "yes" } else { "no" }
    ))
}

// C9 ------------------------------------------------------------------------

fn pooling_comparison(w: &Work) -> Check {
    let corpus = w.path("c9-corpus");
    sarcasm([
        OsStr::new("synth"),
        OsStr::new("--kind"),
        OsStr::new("separable"),
        OsStr::new("--n"),
        OsStr::new("240"),
        OsStr::new("--seed"),
        OsStr::new("5"),
        OsStr::new("--out"),
        p(&corpus),
    ])?;
    let splits = w.path("c9-split");
    sarcasm([
        OsStr::new("split"),
        OsStr::new("--input"),
        p(&corpus.join("corpus.jsonl")),
        OsStr::new("--out"),
        p(&splits),
    ])?;
    let mut cfg = read_json(&w.desk_config)?;
    cfg["training"]["max_epochs"] = 3.into();
    let cfg_path = w.path("c9-config.json");
    std::fs::write(&cfg_path, cfg.to_string()).map_err(|e| e.to_string())?;
    let mut tables = Vec::new();
    for run in ["c9-a", "c9-b"] {
        let out = w.path(run);
        sarcasm([
            OsStr::new("compare-pooling"),
            OsStr::new("--config"),
            p(&cfg_path),
            OsStr::new("--data"),
            p(&splits.join("train.jsonl")),
            OsStr::new("--valid"),
            p(&splits.join("valid.jsonl")),
            OsStr::new("--out"),
            p(&out),
        ])?;
        let table = std::fs::read(out.join("pooling.txt")).map_err(|e| e.to_string())?;
        let json = std::fs::read(out.join("pooling.json")).map_err(|e| e.to_string())?;
        tables.push((table, json));
    }
    ensure!(tables[0] == tables[1], "reports differ between identical runs");
    let text = String::from_utf8_lossy(&tables[0].0).into_owned();
    for row in ["NeXtVLAD", "MaxPool", "MeanPool"] {
        ensure!(text.contains(row), "report lacks a {row} row:\n{text}");
    }
    ensure!(
        text.lines().next().is_some_and(|h| h.contains("Precision") && h.contains("Recall") && h.contains("F1")),
        "report header:\n{text}"
    );
    Ok(format!(
        "three pooling rows, byte-identical across two runs:\n{}",
        text.trim_end()
            .lines()
            .map(|l| format!("        {l}"))
            .collect::<Vec<_>>()
            .join("\n")
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let desk_config = tmp.path().join("desk.json");
    match sarcasm(["default-config", "--desk"]) {
        Ok(text) => std::fs::write(&desk_config, text).expect("write desk config"),
        Err(e) => {
            println!("[FAIL] setup: {e}");
            std::process::exit(1);
        }
    }
    let work = Work {
        root: tmp.path().to_path_buf(),
        desk_config,
    };
    let criteria: [Criterion; 9] = [
        ("C1", "desk-scale scope", scope),
        ("C2", "gradient suite", gradient_suite),
        ("C3", "shape/normalization suite", shapes_and_normalization),
        ("C4", "schedule suite", schedule),
        ("C5", "oracle suites", oracles),
        ("C6", "augmentation contracts", augmentation_contracts),
        ("C7", "end-to-end desk run", end_to_end),
        ("C8", "directional augmentation check", directional),
        ("C9", "pooling comparison harness", pooling_comparison),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&work))).unwrap_or_else(|panic| {
            Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
