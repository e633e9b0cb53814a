//! Scanning Python files with a trained model.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vulnhound_core::dataset::{make_windows_from, window_lines, FileOrigin, WindowOptions, WindowSpec};
use vulnhound_core::embed::Provider;
use vulnhound_core::evalkit::{file_verdict, FileRule};
use vulnhound_core::features::VectorSource;
use vulnhound_core::pylex::{tokenize, LineIndex, Span};
use vulnhound_core::rnn::{predict, ModelFile};

use crate::ops::{check_compatible, Vectors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedWindow {
    pub start_token: usize,
    /// `[start of first token, end of last token)`.
    pub span: Span,
    /// 1-based inclusive line range.
    pub lines: [usize; 2],
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: String,
    pub verdict: Verdict,
    pub max_probability: Option<f64>,
    pub windows: usize,
    pub flagged: Vec<FlaggedWindow>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub files: usize,
    pub positive: usize,
    pub negative: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// SHA-256 of the model file.
    pub model_id: String,
    pub provider: Provider,
    pub threshold: f64,
    pub window: WindowSpec,
    pub config: serde_json::Value,
    pub files: Vec<FileReport>,
    pub summary: ScanSummary,
}

impl ScanReport {
    /// Path -> verdict, errored files excluded.
    pub fn verdicts(&self) -> std::collections::BTreeMap<String, bool> {
        self.files
            .iter()
            .filter(|f| f.verdict != Verdict::Error)
            .map(|f| (f.path.clone(), f.verdict == Verdict::Positive))
            .collect()
    }
}

/// Expands directories to the `.py` files below them (hidden directories
/// skipped). Explicit file arguments are kept whatever their extension.
/// Paths are reported as walked from the argument and are unique.
pub fn collect_inputs(paths: &[PathBuf]) -> Vec<String> {
    let mut out = BTreeSet::new();
    for root in paths {
        if root.is_dir() {
            let walker = walkdir::WalkDir::new(root)
                .sort_by_file_name()
                .into_iter()
                .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
            for entry in walker.filter_map(|e| e.ok()) {
                if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "py") {
                    out.insert(entry.path().to_string_lossy().into_owned());
                }
            }
        } else {
            out.insert(root.to_string_lossy().into_owned());
        }
    }
    out.into_iter().collect()
}

/// Scan `paths` (files or directories). Files that cannot be read, decoded
/// or embedded are reported with verdict `error`.
pub fn scan(paths: &[PathBuf], model: &ModelFile, model_id: &str, vectors: &Vectors) -> Result<ScanReport> {
    check_compatible(model, vectors)?;
    let source = vectors.source();
    let opts = WindowOptions {
        spec: model.meta.window,
        min_overlap: 1,
    };
    let files: Vec<FileReport> = collect_inputs(paths)
        .par_iter()
        .map(|path| match scan_file(path, model, &source, &opts) {
            Ok(r) => r,
            Err(e) => FileReport {
                path: path.clone(),
                verdict: Verdict::Error,
                max_probability: None,
                windows: 0,
                flagged: Vec::new(),
                error: Some(format!("{e:#}")),
            },
        })
        .collect();
    let mut summary = ScanSummary {
        files: files.len(),
        ..ScanSummary::default()
    };
    for f in &files {
        match f.verdict {
            Verdict::Positive => summary.positive += 1,
            Verdict::Negative => summary.negative += 1,
            Verdict::Error => summary.errors += 1,
        }
    }
    Ok(ScanReport {
        model_id: model_id.to_string(),
        provider: model.meta.provider,
        threshold: model.threshold,
        window: model.meta.window,
        config: model.meta.config.clone(),
        files,
        summary,
    })
}

fn scan_file(path: &str, model: &ModelFile, source: &VectorSource<'_>, opts: &WindowOptions) -> Result<FileReport> {
    let bytes = std::fs::read(Path::new(path))?;
    let stream = tokenize(&bytes)?;
    let text = std::str::from_utf8(&bytes).expect("tokenize validated UTF-8");
    let (texts, spans) = match source {
        VectorSource::Table(_) => (stream.texts(), stream.spans()),
        VectorSource::External { sequences, .. } => {
            let seq = sequences
                .get(path)
                .ok_or_else(|| anyhow::anyhow!("no external vectors for {path}"))?;
            if let Some(e) = seq.entries.iter().find(|e| e.span.end > bytes.len()) {
                anyhow::bail!("external span {:?} runs past the end of the file", e.span);
            }
            (seq.tokens(), seq.spans())
        }
    };
    let origin = FileOrigin {
        repo: String::new(),
        commit: String::new(),
        path: path.to_string(),
    };
    let zeros = vec![0u8; texts.len()];
    let windows = make_windows_from(&texts, &spans, &zeros, opts, &origin)?;
    let index = LineIndex::new(text);
    let mut flagged = Vec::new();
    let mut verdicts = Vec::with_capacity(windows.len());
    let mut max_probability: Option<f64> = None;
    for w in &windows {
        let s = source.sample(w)?;
        let pr = predict(&model.params, &s.x, &s.valid, model.threshold)?;
        max_probability = Some(max_probability.map_or(pr.probability, |m| m.max(pr.probability)));
        verdicts.push(pr.positive);
        if pr.positive {
            let first = w.spans[0];
            let last = w.spans[w.spans.len() - 1];
            let (a, b) = window_lines(&index, &w.spans).unwrap_or((1, 1));
            flagged.push(FlaggedWindow {
                start_token: w.start,
                span: Span::new(first.start, last.end),
                lines: [a, b],
                probability: pr.probability,
            });
        }
    }
    Ok(FileReport {
        path: path.to_string(),
        verdict: if file_verdict(&verdicts, FileRule::Any) {
            Verdict::Positive
        } else {
            Verdict::Negative
        },
        max_probability,
        windows: windows.len(),
        flagged,
        error: None,
    })
}

pub fn render_text(r: &ScanReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model {} ({} vectors, window {}/{}, threshold {})",
        &r.model_id[..r.model_id.len().min(12)],
        r.provider,
        r.window.window_len,
        r.window.stride,
        r.threshold
    );
    for f in &r.files {
        match f.verdict {
            Verdict::Error => {
                let _ = writeln!(out, "ERROR     {}  {}", f.path, f.error.as_deref().unwrap_or(""));
            }
            v => {
                let tag = if v == Verdict::Positive { "POSITIVE" } else { "negative" };
                let max = f.max_probability.map_or("-".to_string(), |p| format!("{p:.3}"));
                let _ = writeln!(
                    out,
                    "{tag:<9} {}  max {max}  ({} of {} windows flagged)",
                    f.path,
                    f.flagged.len(),
                    f.windows
                );
                for w in &f.flagged {
                    let _ = writeln!(
                        out,
                        "    lines {}-{}  bytes [{}, {})  p={:.3}",
                        w.lines[0], w.lines[1], w.span.start, w.span.end, w.probability
                    );
                }
            }
        }
    }
    let s = &r.summary;
    let _ = writeln!(
        out,
        "{} files: {} positive, {} negative, {} errors",
        s.files, s.positive, s.negative, s.errors
    );
    out
}
