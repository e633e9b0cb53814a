//! Labeled sliding windows over token streams.
//!
//! A token is labeled vulnerable when its byte span touches any line the fix
//! changed. Windows of `window_len` tokens are taken every `stride` tokens;
//! the final partial windows are zero-padded. A window is positive when it
//! holds at least `min_overlap` positive tokens (default 1).
//!
//! Splits group windows by repository so near-duplicate code from one project
//! never straddles train and test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::miner::MinedChange;
use crate::pylex::{line_spans, LineIndex, Span, TokenStream};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("commit {commit} ({path}): changed line {line} exceeds line count {line_count}")]
    LineOutOfRange {
        commit: String,
        path: String,
        line: usize,
        line_count: usize,
    },
    #[error("{labels} labels for {tokens} tokens")]
    LabelCount { labels: usize, tokens: usize },
    #[error("invalid window spec: {0}")]
    WindowSpec(String),
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_len: 128,
            stride: 16,
        }
    }
}

impl WindowSpec {
    pub fn new(window_len: usize, stride: usize) -> Result<Self, DatasetError> {
        let spec = WindowSpec { window_len, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.window_len == 0 || self.stride == 0 {
            return Err(DatasetError::WindowSpec("window_len and stride must be > 0".into()));
        }
        if self.stride > self.window_len {
            return Err(DatasetError::WindowSpec(format!(
                "stride {} exceeds window_len {}",
                self.stride, self.window_len
            )));
        }
        Ok(())
    }

    /// Token ranges `[start, end)` of every window over `n` tokens.
    pub fn ranges(&self, n: usize) -> Vec<(usize, usize)> {
        (0..n)
            .step_by(self.stride)
            .map(|s| (s, (s + self.window_len).min(n)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub repo: String,
    pub commit: String,
    pub path: String,
    pub start: usize,
}

/// One dataset record. Serialized field order is fixed:
/// `repo, commit, path, start, tokens, spans, label, pad`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub repo: String,
    pub commit: String,
    pub path: String,
    pub start: usize,
    pub tokens: Vec<String>,
    pub spans: Vec<Span>,
    pub label: u8,
    pub pad: usize,
}

impl LabeledWindow {
    pub fn origin(&self) -> Origin {
        Origin {
            repo: self.repo.clone(),
            commit: self.commit.clone(),
            path: self.path.clone(),
            start: self.start,
        }
    }

    pub fn window_len(&self) -> usize {
        self.tokens.len() + self.pad
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Provenance shared by all windows of one file.
#[derive(Debug, Clone, Default)]
pub struct FileOrigin {
    pub repo: String,
    pub commit: String,
    pub path: String,
}

impl FileOrigin {
    pub fn of(change: &MinedChange) -> Self {
        FileOrigin {
            repo: change.repo_id.clone(),
            commit: change.commit_id.clone(),
            path: change.file_path.clone(),
        }
    }
}

/// Per-token labels for a mined change: 1 iff the token's span intersects a
/// changed line.
pub fn label_tokens(change: &MinedChange, stream: &TokenStream, lines: &[Span]) -> Result<Vec<u8>, DatasetError> {
    label_spans(change, &stream.spans(), lines)
}

/// [`label_tokens`] over bare spans, shared by the lexical and external
/// vector routes.
pub fn label_spans(change: &MinedChange, spans: &[Span], lines: &[Span]) -> Result<Vec<u8>, DatasetError> {
    let mut changed = Vec::with_capacity(change.changed_lines.len());
    for &line in &change.changed_lines {
        if line == 0 || line > lines.len() {
            return Err(DatasetError::LineOutOfRange {
                commit: change.commit_id.clone(),
                path: change.file_path.clone(),
                line,
                line_count: lines.len(),
            });
        }
        changed.push(lines[line - 1]);
    }
    // Changed line spans are sorted and disjoint; binary search the first
    // one that ends after the token starts.
    Ok(spans
        .iter()
        .map(|span| {
            let i = changed.partition_point(|l| l.end <= span.start);
            let hit = changed[i..]
                .iter()
                .take_while(|l| l.start <= span.end)
                .any(|l| span.intersects(l));
            u8::from(hit)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOptions {
    pub spec: WindowSpec,
    /// Positive tokens a window needs to be labeled positive.
    pub min_overlap: usize,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions {
            spec: WindowSpec::default(),
            min_overlap: 1,
        }
    }
}

pub fn make_windows(
    stream: &TokenStream,
    token_labels: &[u8],
    spec: WindowSpec,
    origin: &FileOrigin,
) -> Result<Vec<LabeledWindow>, DatasetError> {
    let texts = stream.texts();
    make_windows_from(
        &texts,
        &stream.spans(),
        token_labels,
        &WindowOptions { spec, min_overlap: 1 },
        origin,
    )
}

pub fn make_windows_from(
    texts: &[String],
    spans: &[Span],
    token_labels: &[u8],
    opts: &WindowOptions,
    origin: &FileOrigin,
) -> Result<Vec<LabeledWindow>, DatasetError> {
    opts.spec.validate()?;
    if token_labels.len() != texts.len() || spans.len() != texts.len() {
        return Err(DatasetError::LabelCount {
            labels: token_labels.len(),
            tokens: texts.len(),
        });
    }
    let min_overlap = opts.min_overlap.max(1);
    Ok(opts
        .spec
        .ranges(texts.len())
        .into_iter()
        .map(|(s, e)| {
            let hits = token_labels[s..e].iter().filter(|&&l| l == 1).count();
            LabeledWindow {
                repo: origin.repo.clone(),
                commit: origin.commit.clone(),
                path: origin.path.clone(),
                start: s,
                tokens: texts[s..e].to_vec(),
                spans: spans[s..e].to_vec(),
                label: u8::from(hits >= min_overlap),
                pad: opts.spec.window_len - (e - s),
            }
        })
        .collect())
}

/// Tokenize, label and window one mined change.
pub fn windows_for_change(
    change: &MinedChange,
    stream: &TokenStream,
    opts: &WindowOptions,
) -> Result<Vec<LabeledWindow>, DatasetError> {
    let lines = line_spans(&change.pre_image);
    let labels = label_tokens(change, stream, &lines)?;
    make_windows_from(&stream.texts(), &stream.spans(), &labels, opts, &FileOrigin::of(change))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DatasetError::Ratios(format!(
                "every ratio must be positive, got {}/{}/{}",
                self.train, self.validation, self.test
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Ratios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Partition sizes for `n` items by cumulative rounding.
    fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let upto_val = ((n as f64) * (self.train + self.validation)).round() as usize;
        let train = train.min(n);
        let upto_val = upto_val.clamp(train, n);
        (train, upto_val - train, n - upto_val)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub validation: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    pub ratios: SplitRatios,
    pub seed: u64,
    /// True when there were too few repositories and windows were split
    /// individually instead of by repository.
    pub window_level: bool,
}

/// Seeded split grouped by repository. With fewer than three repositories
/// a window-level split with the same seed is used instead.
pub fn split(windows: Vec<LabeledWindow>, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, DatasetError> {
    ratios.validate()?;
    let repos: BTreeSet<&str> = windows.iter().map(|w| w.repo.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if repos.len() < 3 {
        log::warn!(
            "only {} repositories; falling back to a window-level split",
            repos.len()
        );
        let mut idx: Vec<usize> = (0..windows.len()).collect();
        idx.shuffle(&mut rng);
        let (n_train, n_val, _) = ratios.sizes(windows.len());
        let mut bucket = vec![0u8; windows.len()];
        for (rank, &i) in idx.iter().enumerate() {
            bucket[i] = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
        }
        let mut out = DatasetSplit {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            ratios,
            seed,
            window_level: true,
        };
        for (w, b) in windows.into_iter().zip(bucket) {
            match b {
                0 => out.train.push(w),
                1 => out.validation.push(w),
                _ => out.test.push(w),
            }
        }
        return Ok(out);
    }

    let mut order: Vec<String> = repos.into_iter().map(str::to_string).collect();
    order.shuffle(&mut rng);
    let (n_train, n_val, _) = ratios.sizes(order.len());
    let bucket: HashMap<String, u8> = order
        .into_iter()
        .enumerate()
        .map(|(rank, repo)| {
            let b = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
            (repo, b)
        })
        .collect();
    let mut out = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        ratios,
        seed,
        window_level: false,
    };
    for w in windows {
        match bucket[&w.repo] {
            0 => out.train.push(w),
            1 => out.validation.push(w),
            _ => out.test.push(w),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub input: usize,
    pub duplicates_removed: usize,
    /// Distinct token sequences that occurred with both labels.
    pub conflicts: usize,
    pub conflicting_windows_dropped: usize,
}

/// Collapses windows with identical token sequences to their first
/// occurrence. Sequences seen with both labels are dropped entirely.
pub fn dedup(windows: Vec<LabeledWindow>) -> (Vec<LabeledWindow>, DedupReport) {
    let mut labels: HashMap<&[String], (bool, bool)> = HashMap::new();
    for w in &windows {
        let e = labels.entry(w.tokens.as_slice()).or_default();
        if w.is_positive() {
            e.1 = true;
        } else {
            e.0 = true;
        }
    }
    let conflicted: std::collections::HashSet<Vec<String>> = labels
        .iter()
        .filter(|(_, (neg, pos))| *neg && *pos)
        .map(|(k, _)| k.to_vec())
        .collect();
    let mut report = DedupReport {
        input: windows.len(),
        conflicts: conflicted.len(),
        ..Default::default()
    };
    let mut seen = std::collections::HashSet::new();
    let mut kept = Vec::new();
    for w in windows {
        if conflicted.contains(&w.tokens) {
            report.conflicting_windows_dropped += 1;
        } else if seen.insert(w.tokens.clone()) {
            kept.push(w);
        } else {
            report.duplicates_removed += 1;
        }
    }
    (kept, report)
}

/// Keeps every positive window and a seeded random `keep` fraction of the
/// negatives. Off unless explicitly requested.
pub fn downsample_negatives(windows: Vec<LabeledWindow>, keep: f64, seed: u64) -> Vec<LabeledWindow> {
    use rand::Rng;
    if keep >= 1.0 {
        return windows;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    windows
        .into_iter()
        .filter(|w| w.is_positive() || rng.gen::<f64>() < keep)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub windows: usize,
    pub positives: usize,
    pub positive_ratio: f64,
    pub files: usize,
    pub repos: usize,
}

pub fn stats(windows: &[LabeledWindow]) -> DatasetStats {
    let positives = windows.iter().filter(|w| w.is_positive()).count();
    let files: BTreeSet<(&str, &str, &str)> = windows
        .iter()
        .map(|w| (w.repo.as_str(), w.commit.as_str(), w.path.as_str()))
        .collect();
    let repos: BTreeSet<&str> = windows.iter().map(|w| w.repo.as_str()).collect();
    DatasetStats {
        windows: windows.len(),
        positives,
        positive_ratio: if windows.is_empty() {
            0.0
        } else {
            positives as f64 / windows.len() as f64
        },
        files: files.len(),
        repos: repos.len(),
    }
}

pub fn write_jsonl(path: &Path, windows: &[LabeledWindow]) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for w in windows {
        serde_json::to_writer(&mut out, w).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledWindow>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let w: LabeledWindow = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if w.spans.len() != w.tokens.len() || w.label > 1 {
            return Err(DatasetError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "spans/tokens length mismatch or label outside {0,1}".into(),
            });
        }
        out.push(w);
    }
    Ok(out)
}

/// Groups windows by file, keyed by `(repo, commit, path)`, windows in start
/// order.
pub fn by_file(windows: &[LabeledWindow]) -> BTreeMap<(String, String, String), Vec<&LabeledWindow>> {
    let mut map: BTreeMap<_, Vec<&LabeledWindow>> = BTreeMap::new();
    for w in windows {
        map.entry((w.repo.clone(), w.commit.clone(), w.path.clone()))
            .or_default()
            .push(w);
    }
    for v in map.values_mut() {
        v.sort_by_key(|w| w.start);
    }
    map
}

/// 1-based inclusive line range covered by a window.
pub fn window_lines(index: &LineIndex, spans: &[Span]) -> Option<(usize, usize)> {
    let first = spans.first()?;
    let last = spans.last()?;
    Some((index.line_of(first.start), index.line_range(*last).1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pylex::tokenize_str;

    fn change(src: &str, lines: Vec<usize>) -> MinedChange {
        MinedChange {
            repo_id: "r".into(),
            commit_id: "c".into(),
            file_path: "a.py".into(),
            pre_image: src.into(),
            changed_lines: lines,
            commit_message: "fix sql injection".into(),
            commit_time: 0,
        }
    }

    fn texts(n: usize) -> (Vec<String>, Vec<Span>) {
        let t = (0..n).map(|i| format!("t{i}")).collect();
        let s = (0..n).map(|i| Span::new(i, i + 1)).collect();
        (t, s)
    }

    fn win(repo: &str, tokens: &[&str], label: u8) -> LabeledWindow {
        LabeledWindow {
            repo: repo.into(),
            commit: "c".into(),
            path: "p.py".into(),
            start: 0,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            spans: tokens.iter().map(|_| Span::new(0, 1)).collect(),
            label,
            pad: 0,
        }
    }

    #[test]
    fn label_middle_line() {
        let src = "a = 1\nb = q + 2\nc = 3\n";
        let ch = change(src, vec![2]);
        let ts = tokenize_str(src);
        let labels = label_tokens(&ch, &ts, &line_spans(src)).unwrap();
        let hot: Vec<_> = ts
            .tokens
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == 1)
            .map(|(t, _)| t.text.as_str())
            .collect();
        assert_eq!(hot, vec!["b", "=", "q", "+", "2", "\n"]);
    }

    #[test]
    fn label_blank_changed_line() {
        let src = "a = 1\n\nc = 3\n";
        let ch = change(src, vec![2]);
        let ts = tokenize_str(src);
        let labels = label_tokens(&ch, &ts, &line_spans(src)).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn label_multiline_token() {
        let src = "x = 1\ns = \"\"\"a\nb\"\"\"\ny = 2\n";
        let ch = change(src, vec![3]);
        let ts = tokenize_str(src);
        let labels = label_tokens(&ch, &ts, &line_spans(src)).unwrap();
        let s_idx = ts.tokens.iter().position(|t| t.text.starts_with("\"\"\"")).unwrap();
        assert_eq!(labels[s_idx], 1);
        assert_eq!(labels[ts.tokens.iter().position(|t| t.text == "s").unwrap()], 0);
    }

    #[test]
    fn label_line_out_of_range() {
        let src = "a\n";
        let ch = change(src, vec![3]);
        let err = label_tokens(&ch, &tokenize_str(src), &line_spans(src)).unwrap_err();
        assert!(matches!(err, DatasetError::LineOutOfRange { line: 3, .. }));
        assert!(err.to_string().contains("commit c"));
    }

    #[test]
    fn ten_tokens_four_by_two() {
        let (t, s) = texts(10);
        let labels = vec![0; 10];
        let opts = WindowOptions {
            spec: WindowSpec::new(4, 2).unwrap(),
            min_overlap: 1,
        };
        let ws = make_windows_from(&t, &s, &labels, &opts, &FileOrigin::default()).unwrap();
        let starts: Vec<_> = ws.iter().map(|w| w.start).collect();
        let pads: Vec<_> = ws.iter().map(|w| w.pad).collect();
        assert_eq!(starts, vec![0, 2, 4, 6, 8]);
        assert_eq!(pads, vec![0, 0, 0, 0, 2]);
        assert!(ws.iter().all(|w| w.label == 0));
    }

    #[test]
    fn single_positive_token() {
        let (t, s) = texts(10);
        let mut labels = vec![0; 10];
        labels[5] = 1;
        let opts = WindowOptions {
            spec: WindowSpec::new(4, 2).unwrap(),
            min_overlap: 1,
        };
        let ws = make_windows_from(&t, &s, &labels, &opts, &FileOrigin::default()).unwrap();
        let pos: Vec<_> = ws.iter().filter(|w| w.label == 1).map(|w| w.start).collect();
        assert_eq!(pos, vec![2, 4]);
    }

    #[test]
    fn min_overlap_threshold() {
        let (t, s) = texts(6);
        let labels = vec![0, 1, 1, 0, 0, 1];
        let opts = WindowOptions {
            spec: WindowSpec::new(3, 3).unwrap(),
            min_overlap: 2,
        };
        let ws = make_windows_from(&t, &s, &labels, &opts, &FileOrigin::default()).unwrap();
        assert_eq!(ws.iter().map(|w| w.label).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn empty_stream_gives_no_windows() {
        let ws = make_windows(
            &TokenStream::default(),
            &[],
            WindowSpec::default(),
            &FileOrigin::default(),
        )
        .unwrap();
        assert!(ws.is_empty());
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(0, 1).is_err());
        assert!(WindowSpec::new(4, 0).is_err());
        assert!(WindowSpec::new(4, 5).is_err());
        assert!(WindowSpec::new(4, 4).is_ok());
    }

    #[test]
    fn label_count_mismatch() {
        let (t, s) = texts(3);
        let err = make_windows_from(&t, &s, &[0, 1], &WindowOptions::default(), &FileOrigin::default());
        assert!(matches!(err, Err(DatasetError::LabelCount { .. })));
    }

    #[test]
    fn dedup_cases() {
        let (kept, rep) = dedup(vec![win("a", &["x"], 0), win("b", &["x"], 0)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(rep.duplicates_removed, 1);

        let (kept, rep) = dedup(vec![win("a", &["x"], 0), win("b", &["x"], 1), win("c", &["y"], 1)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(rep.conflicts, 1);
        assert_eq!(rep.conflicting_windows_dropped, 2);

        let input = vec![win("a", &["x"], 0), win("b", &["y"], 1)];
        let (kept, rep) = dedup(input.clone());
        assert_eq!(kept, input);
        assert_eq!(
            rep,
            DedupReport {
                input: 2,
                ..Default::default()
            }
        );
    }

    #[test]
    fn split_by_repo_is_deterministic_and_disjoint() {
        let windows: Vec<_> = (0..10)
            .flat_map(|r| {
                (0..5).map(move |i| {
                    let mut w = win(&format!("repo{r}"), &["t"], (i % 2) as u8);
                    w.start = i;
                    w
                })
            })
            .collect();
        let a = split(windows.clone(), SplitRatios::default(), 42).unwrap();
        let b = split(windows, SplitRatios::default(), 42).unwrap();
        assert_eq!(a, b);
        assert!(!a.window_level);
        let repos = |ws: &[LabeledWindow]| ws.iter().map(|w| w.repo.clone()).collect::<BTreeSet<_>>();
        let (tr, va, te) = (repos(&a.train), repos(&a.validation), repos(&a.test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        assert_eq!(tr.len() + va.len() + te.len(), 10);
        assert_eq!(tr.len(), 7);
    }

    #[test]
    fn split_single_repo_falls_back() {
        let windows: Vec<_> = (0..100)
            .map(|i| {
                let mut w = win("only", &["t"], 0);
                w.start = i;
                w
            })
            .collect();
        let s = split(windows, SplitRatios::default(), 7).unwrap();
        assert!(s.window_level);
        assert!((s.train.len() as i64 - 70).abs() <= 1);
        assert!((s.validation.len() as i64 - 15).abs() <= 1);
        assert!((s.test.len() as i64 - 15).abs() <= 1);
    }

    #[test]
    fn split_rejects_zero_ratio() {
        let r = SplitRatios {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        };
        assert!(matches!(split(vec![], r, 1), Err(DatasetError::Ratios(_))));
        let r = SplitRatios {
            train: 0.5,
            validation: 0.2,
            test: 0.2,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn jsonl_field_order_is_fixed() {
        let w = LabeledWindow {
            repo: "r".into(),
            commit: "c".into(),
            path: "a.py".into(),
            start: 4,
            tokens: vec!["x".into()],
            spans: vec![Span::new(0, 1)],
            label: 1,
            pad: 3,
        };
        assert_eq!(
            serde_json::to_string(&w).unwrap(),
            r#"{"repo":"r","commit":"c","path":"a.py","start":4,"tokens":["x"],"spans":[[0,1]],"label":1,"pad":3}"#
        );
    }

    #[test]
    fn jsonl_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let ws = vec![win("a", &["x", "y"], 1), win("b", &["z"], 0)];
        write_jsonl(&p, &ws).unwrap();
        assert_eq!(read_jsonl(&p).unwrap(), ws);
    }

    #[test]
    fn downsampling_keeps_positives() {
        let ws: Vec<_> = (0..200).map(|i| win("a", &["t"], u8::from(i % 10 == 0))).collect();
        let kept = downsample_negatives(ws, 0.25, 3);
        assert_eq!(kept.iter().filter(|w| w.is_positive()).count(), 20);
        let neg = kept.iter().filter(|w| !w.is_positive()).count();
        assert!(neg > 20 && neg < 80, "{neg}");
    }
}
