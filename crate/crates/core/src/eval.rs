//! Confusion counts and precision / recall / F1 with SARCASM as the
//! positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("nothing to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with NOT_SARCASM treated as positive.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

pub fn confusion(predictions: &[Label], gold: &[Label]) -> Result<Confusion, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (Label::Sarcasm, Label::Sarcasm) => c.tp += 1,
            (Label::Sarcasm, Label::NotSarcasm) => c.fp += 1,
            (Label::NotSarcasm, Label::Sarcasm) => c.fn_ += 1,
            (Label::NotSarcasm, Label::NotSarcasm) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold records of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub confusion: Confusion,
    pub sarcasm: ClassMetrics,
    pub not_sarcasm: ClassMetrics,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    /// SARCASM-class metrics, repeated for convenience.
    pub positive: Prf,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn class_metrics(c: &Confusion) -> ClassMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    ClassMetrics {
        precision,
        recall,
        f1: harmonic(precision, recall),
        support: c.tp + c.fn_,
    }
}

/// Zero denominators give 0, never NaN.
pub fn metrics(c: &Confusion) -> MetricReport {
    let sarcasm = class_metrics(c);
    let not_sarcasm = class_metrics(&c.swapped());
    let macro_avg = Prf {
        precision: (sarcasm.precision + not_sarcasm.precision) / 2.0,
        recall: (sarcasm.recall + not_sarcasm.recall) / 2.0,
        f1: (sarcasm.f1 + not_sarcasm.f1) / 2.0,
    };
    MetricReport {
        confusion: *c,
        sarcasm,
        not_sarcasm,
        macro_avg,
        positive: Prf {
            precision: sarcasm.precision,
            recall: sarcasm.recall,
            f1: sarcasm.f1,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStyle {
    /// Precision, Recall, F1 columns with 4 decimals.
    Table2,
    /// Per-class, macro and positive-class rows with support counts.
    Plain,
}

impl std::str::FromStr for ReportStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table2" => Ok(ReportStyle::Table2),
            "plain" => Ok(ReportStyle::Plain),
            other => Err(format!("unknown report style {other:?}")),
        }
    }
}

const NAME_WIDTH: usize = 18;

fn table2_header() -> String {
    format!("{:<NAME_WIDTH$}| Precision | Recall | F1     |\n", "Metric")
}

fn table2_row(name: &str, p: &Prf) -> String {
    format!(
        "{name:<NAME_WIDTH$}| {:<9.4} | {:.4} | {:.4} |\n",
        p.precision, p.recall, p.f1
    )
}

/// Several named macro-averaged rows under one header.
pub fn table2(rows: &[(&str, &MetricReport)]) -> String {
    let mut out = table2_header();
    for (name, r) in rows {
        out.push_str(&table2_row(name, &r.macro_avg));
    }
    out
}

pub fn report(r: &MetricReport, style: ReportStyle) -> String {
    match style {
        ReportStyle::Table2 => table2(&[("macro", r)]),
        ReportStyle::Plain => {
            let mut out = format!(
                "{:<12} {:>9} {:>9} {:>9} {:>8}\n",
                "class", "precision", "recall", "f1", "support"
            );
            for (name, m) in [("SARCASM", &r.sarcasm), ("NOT_SARCASM", &r.not_sarcasm)] {
                out.push_str(&format!(
                    "{name:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
                    m.precision, m.recall, m.f1, m.support
                ));
            }
            let total = r.sarcasm.support + r.not_sarcasm.support;
            for (name, p) in [("macro", &r.macro_avg), ("positive", &r.positive)] {
                out.push_str(&format!(
                    "{name:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
                    p.precision, p.recall, p.f1, total
                ));
            }
            out
        }
    }
}
