//! F1 metrics of ranked predictions against single gold labels.
//!
//! Ranked predictions are reduced to one effective label: the gold label when it
//! appears among the top `k`, otherwise the top-1 label. Per-class precision,
//! recall and F1 follow, then macro, micro and support-weighted macro means.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassificationResult;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("evaluate: invalid configuration: {0}")]
    Config(String),
    #[error("evaluate: {0}")]
    Data(String),
    #[error("evaluate: {file} line {line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("evaluate: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabel {
    pub id: String,
    pub fos: String,
}

/// Ranked labels for one publication, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub id: String,
    pub labels: Vec<String>,
}

impl From<&ClassificationResult> for Prediction {
    fn from(r: &ClassificationResult) -> Self {
        Self {
            id: r.id.clone(),
            labels: r.labels.iter().map(|l| l.fos.clone()).collect(),
        }
    }
}

/// Reads `id\tfos` lines; blank and `#` lines are skipped.
pub fn read_gold<R: BufRead>(reader: R) -> Result<Vec<GoldLabel>, EvaluateError> {
    let mut gold = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        match cols[..] {
            [id, fos] if !id.is_empty() && !fos.is_empty() => gold.push(GoldLabel {
                id: id.to_owned(),
                fos: fos.to_owned(),
            }),
            _ => {
                return Err(EvaluateError::Parse {
                    file: "gold",
                    line: idx + 1,
                    message: "expected two non-empty tab-separated columns".into(),
                })
            }
        }
    }
    Ok(gold)
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldLabel>, EvaluateError> {
    read_gold(BufReader::new(File::open(path)?))
}

#[derive(Deserialize)]
struct ResultLine {
    id: String,
    labels: Vec<LabelLine>,
}

#[derive(Deserialize)]
struct LabelLine {
    fos: String,
}

/// Reads classification output lines (`id`, ranked `labels[].fos`).
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, EvaluateError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ResultLine = serde_json::from_str(&line).map_err(|e| EvaluateError::Parse {
            file: "results",
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(Prediction {
            id: parsed.id,
            labels: parsed.labels.into_iter().map(|l| l.fos).collect(),
        });
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, EvaluateError> {
    read_predictions(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub fos: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold items of this class.
    pub support: usize,
    /// Items whose effective prediction is this class.
    pub predicted: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub k: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_macro_f1: f64,
    pub total: usize,
    pub correct: usize,
    /// Gold items without any predicted label.
    pub unpredicted: usize,
    pub classes: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// The label credited for one item under top-`k`.
pub fn effective_prediction<'a>(gold: &str, ranked: &'a [String], k: usize) -> Option<&'a str> {
    ranked
        .iter()
        .take(k)
        .find(|l| *l == gold)
        .or_else(|| ranked.first())
        .map(String::as_str)
}

pub fn evaluate(predictions: &[Prediction], gold: &[GoldLabel], k: usize) -> Result<MetricsReport, EvaluateError> {
    if k == 0 {
        return Err(EvaluateError::Config("k must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(EvaluateError::Data(format!("duplicate gold id {:?}", g.id)));
        }
    }
    let mut by_id: HashMap<&str, &[String]> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), &p.labels).is_some() {
            return Err(EvaluateError::Data(format!("duplicate prediction id {:?}", p.id)));
        }
    }

    // class → (support, predicted, tp)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let (mut correct, mut unpredicted) = (0, 0);
    for g in gold {
        counts.entry(&g.fos).or_default().0 += 1;
        let ranked = by_id.get(g.id.as_str()).copied().unwrap_or_default();
        match effective_prediction(&g.fos, ranked, k) {
            Some(p) => {
                let c = counts.entry(p).or_default();
                c.1 += 1;
                if p == g.fos {
                    c.2 += 1;
                    correct += 1;
                }
            }
            None => unpredicted += 1,
        }
    }

    let total = gold.len();
    let classes: Vec<ClassMetrics> = counts
        .into_iter()
        .map(|(fos, (support, predicted, tp))| {
            let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
            ClassMetrics {
                fos: fos.to_owned(),
                precision,
                recall,
                f1: f1(precision, recall),
                support,
                predicted,
                true_positives: tp,
            }
        })
        .collect();
    let macro_f1 = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
    };
    let weighted_macro_f1 = classes.iter().map(|c| ratio(c.support, total) * c.f1).sum();
    let predicted_total = total - unpredicted;
    let micro_f1 = f1(ratio(correct, predicted_total), ratio(correct, total));
    Ok(MetricsReport {
        k,
        macro_f1,
        micro_f1,
        weighted_macro_f1,
        total,
        correct,
        unpredicted,
        classes,
    })
}

/// Tab-separated per-class rows sorted by FoS id, then an aggregate footer.
pub fn write_report<W: Write>(metrics: &MetricsReport, out: &mut W) -> Result<(), EvaluateError> {
    writeln!(
        out,
        "# top-{} evaluation; rows with support 0 are classes that were only predicted",
        metrics.k
    )?;
    writeln!(out, "fos\tprecision\trecall\tf1\tsupport\tpredicted")?;
    if metrics.classes.is_empty() {
        log::warn!("evaluation has no classes; writing header only");
        return Ok(());
    }
    for c in &metrics.classes {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            c.fos, c.precision, c.recall, c.f1, c.support, c.predicted
        )?;
    }
    writeln!(out, "# macro_f1\t{:.6}", metrics.macro_f1)?;
    writeln!(out, "# micro_f1\t{:.6}", metrics.micro_f1)?;
    writeln!(out, "# weighted_macro_f1\t{:.6}", metrics.weighted_macro_f1)?;
    writeln!(
        out,
        "# total\t{}\tcorrect\t{}\tunpredicted\t{}",
        metrics.total, metrics.correct, metrics.unpredicted
    )?;
    Ok(())
}

pub fn save_report(metrics: &MetricsReport, path: impl AsRef<Path>) -> Result<(), EvaluateError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_report(metrics, &mut out)?;
    out.flush()?;
    Ok(())
}
