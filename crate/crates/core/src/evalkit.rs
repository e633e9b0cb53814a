//! Confusion-matrix metrics and external SAST verdict ingestion.
//!
//! Metrics with a zero denominator are *undefined* (`None`), never silently
//! zero, and render as `-` in comparison tables. Every defined metric is a
//! single division of exact integers, so it is the correctly rounded binary64
//! value of the underlying rational.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("file sets differ: only in predictions {only_predicted:?}, only in ground truth {only_truth:?}")]
    FileSetMismatch {
        only_predicted: Vec<String>,
        only_truth: Vec<String>,
    },
    #[error("unknown SAST format {0:?} (expected bandit-json or generic-csv)")]
    UnknownFormat(String),
    #[error("malformed {format} file {path}: {message}")]
    Malformed {
        format: &'static str,
        path: String,
        message: String,
    },
    #[error("duplicate path {0:?}")]
    DuplicatePath(String),
    #[error("comparison table needs at least one entry")]
    EmptyTable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Confusion { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &Confusion) -> Result<Metrics, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    // F1 = 2PR/(P+R) = 2tp / (2tp + fp + fn); defined iff P and R are
    // defined and not both zero, i.e. iff tp > 0.
    let f1 = (c.tp > 0).then(|| (2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64);
    Ok(Metrics {
        accuracy: ratio(c.tp + c.tn, total),
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        f1,
    })
}

/// Harmonic mean of precision and recall given as fractions.
pub fn harmonic_f1(precision: f64, recall: f64) -> Option<f64> {
    (precision + recall > 0.0).then(|| 2.0 * precision * recall / (precision + recall))
}

pub fn score_windows(predictions: &[bool], labels: &[bool]) -> Result<Confusion, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        c.add(p, l);
    }
    Ok(c)
}

/// How per-window verdicts lift to a file verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FileRule {
    /// Positive if any window is positive.
    #[default]
    Any,
    /// Positive if at least `k` windows are positive.
    AtLeast(usize),
}

pub fn file_verdict(window_verdicts: &[bool], rule: FileRule) -> bool {
    let hits = window_verdicts.iter().filter(|&&v| v).count();
    match rule {
        FileRule::Any => hits >= 1,
        FileRule::AtLeast(k) => hits >= k.max(1),
    }
}

pub fn score_files(predicted: &BTreeMap<String, bool>, truth: &BTreeMap<String, bool>) -> Result<Confusion, EvalError> {
    let p: BTreeSet<&String> = predicted.keys().collect();
    let t: BTreeSet<&String> = truth.keys().collect();
    if p != t {
        return Err(EvalError::FileSetMismatch {
            only_predicted: p.difference(&t).map(|s| s.to_string()).collect(),
            only_truth: t.difference(&p).map(|s| s.to_string()).collect(),
        });
    }
    let mut c = Confusion::default();
    for (path, &v) in predicted {
        c.add(v, truth[path]);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub line: Option<u64>,
    pub rule_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SastVerdictSet {
    pub tool: String,
    pub verdicts: BTreeMap<String, bool>,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SastFormat {
    BanditJson,
    GenericCsv,
}

impl std::str::FromStr for SastFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bandit-json" => Ok(SastFormat::BanditJson),
            "generic-csv" => Ok(SastFormat::GenericCsv),
            other => Err(EvalError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SastOptions {
    pub tool: String,
    /// Bandit test ids counted as SQL injection findings.
    pub sql_test_ids: BTreeSet<String>,
}

impl Default for SastOptions {
    fn default() -> Self {
        SastOptions {
            tool: String::new(),
            sql_test_ids: ["B608".to_string()].into_iter().collect(),
        }
    }
}

pub fn ingest_sast(path: &Path, format: &str) -> Result<SastVerdictSet, EvalError> {
    ingest_sast_with(path, format.parse()?, &SastOptions::default())
}

pub fn ingest_sast_with(path: &Path, format: SastFormat, opts: &SastOptions) -> Result<SastVerdictSet, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let origin = path.display().to_string();
    match format {
        SastFormat::BanditJson => parse_bandit(&text, &origin, opts),
        SastFormat::GenericCsv => parse_verdict_csv(&text, &origin, opts),
    }
}

#[derive(Deserialize)]
struct BanditReport {
    results: Vec<BanditResult>,
    #[serde(default)]
    metrics: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct BanditResult {
    filename: String,
    test_id: String,
    #[serde(default)]
    line_number: Option<u64>,
}

pub fn parse_bandit(text: &str, origin: &str, opts: &SastOptions) -> Result<SastVerdictSet, EvalError> {
    let report: BanditReport = serde_json::from_str(text).map_err(|e| EvalError::Malformed {
        format: "bandit-json",
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    // Every scanned file appears under "metrics" (besides "_totals").
    let mut verdicts: BTreeMap<String, bool> = report
        .metrics
        .keys()
        .filter(|k| k.as_str() != "_totals")
        .map(|k| (k.clone(), false))
        .collect();
    let mut findings = Vec::new();
    for r in report.results {
        let entry = verdicts.entry(r.filename.clone()).or_insert(false);
        if opts.sql_test_ids.contains(&r.test_id) {
            *entry = true;
            findings.push(Finding {
                path: r.filename,
                line: r.line_number,
                rule_id: Some(r.test_id),
            });
        }
    }
    Ok(SastVerdictSet {
        tool: if opts.tool.is_empty() {
            "bandit".into()
        } else {
            opts.tool.clone()
        },
        verdicts,
        findings,
    })
}

/// `path,verdict` CSV with a header row and verdicts `1` / `0`.
pub fn parse_verdict_csv(text: &str, origin: &str, opts: &SastOptions) -> Result<SastVerdictSet, EvalError> {
    let malformed = |message: String| EvalError::Malformed {
        format: "generic-csv",
        path: origin.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(pc), Some(vc)) = (col("path"), col("verdict")) else {
        return Err(malformed(format!("expected columns path,verdict, got {headers:?}")));
    };
    let mut verdicts = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let path = rec.get(pc).unwrap_or_default().to_string();
        let verdict = match rec.get(vc).unwrap_or_default() {
            "1" => true,
            "0" => false,
            other => return Err(malformed(format!("row {}: verdict {other:?} is not 1 or 0", i + 2))),
        };
        if path.is_empty() {
            return Err(malformed(format!("row {}: empty path", i + 2)));
        }
        if verdicts.insert(path.clone(), verdict).is_some() {
            return Err(EvalError::DuplicatePath(path));
        }
    }
    Ok(SastVerdictSet {
        tool: if opts.tool.is_empty() {
            "generic".into()
        } else {
            opts.tool.clone()
        },
        verdicts,
        findings: Vec::new(),
    })
}

/// Reads a ground-truth or verdict file in the `path,verdict` layout.
pub fn read_verdict_csv(path: &Path) -> Result<BTreeMap<String, bool>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_verdict_csv(&text, &path.display().to_string(), &SastOptions::default())?.verdicts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, Metrics)>,
    pub text: String,
    pub csv: String,
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}%", x * 100.0),
        None => "-".to_string(),
    }
}

fn raw(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "-".to_string(),
    }
}

pub fn comparison_table(entries: &[(String, Confusion)]) -> Result<ComparisonTable, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let rows = entries
        .iter()
        .map(|(name, c)| Ok((name.clone(), compute_metrics(c)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;

    let name_w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(4);
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<name_w$}  {:>7}  {:>9}  {:>7}  {:>7}",
        "", "Acc", "Precision", "Recall", "F1"
    );
    for (name, m) in &rows {
        let _ = writeln!(
            text,
            "{:<name_w$}  {:>7}  {:>9}  {:>7}  {:>7}",
            name,
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1)
        );
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["name", "accuracy", "precision", "recall", "f1"]);
    for (name, m) in &rows {
        let _ = w.write_record([
            name.clone(),
            raw(m.accuracy),
            raw(m.precision),
            raw(m.recall),
            raw(m.f1),
        ]);
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
        .expect("csv writer emits UTF-8");
    Ok(ComparisonTable { rows, text, csv })
}

pub fn parse_comparison_csv(text: &str) -> Result<Vec<(String, Metrics)>, EvalError> {
    let malformed = |message: String| EvalError::Malformed {
        format: "comparison-csv",
        path: String::new(),
        message,
    };
    let cell = |s: &str| -> Result<Option<f64>, EvalError> {
        if s == "-" {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|e| malformed(format!("{s:?}: {e}")))
        }
    };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        if rec.len() != 5 {
            return Err(malformed(format!("expected 5 columns, got {}", rec.len())));
        }
        out.push((
            rec[0].to_string(),
            Metrics {
                accuracy: cell(&rec[1])?,
                precision: cell(&rec[2])?,
                recall: cell(&rec[3])?,
                f1: cell(&rec[4])?,
            },
        ));
    }
    Ok(out)
}
