//! Turning labeled windows into classifier inputs.
//!
//! With the skip-gram provider a window's token texts are looked up in the
//! table. With external vectors the window was cut from the provider's own
//! token sequence, so its `start` indexes straight into that sequence.

use std::collections::HashMap;

use crate::dataset::{label_spans, make_windows_from, DatasetError, FileOrigin, LabeledWindow, WindowOptions};
use crate::embed::{EmbeddingTable, Provider, VectorSequence};
use crate::miner::MinedChange;
use crate::pylex::line_spans;
use crate::rnn::Sample;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("no external vectors for {0}")]
    MissingSequence(String),
    #[error("external vectors for {key} do not cover window at token {start}")]
    Misaligned { key: String, start: usize },
    #[error("vector dim {found} does not match {expected}")]
    Dim { expected: usize, found: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Key under which external vectors are stored for a file: the bare path for
/// scanned files, `repo/commit/path` for mined pre-images.
pub fn sequence_key(repo: &str, commit: &str, path: &str) -> String {
    if repo.is_empty() && commit.is_empty() {
        path.to_string()
    } else {
        format!("{repo}/{commit}/{path}")
    }
}

pub enum VectorSource<'a> {
    Table(&'a EmbeddingTable),
    External {
        dim: usize,
        sequences: HashMap<String, &'a VectorSequence>,
    },
}

impl<'a> VectorSource<'a> {
    pub fn external(dim: usize, seqs: &'a [VectorSequence]) -> Self {
        VectorSource::External {
            dim,
            sequences: seqs.iter().map(|s| (s.file_path.clone(), s)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorSource::Table(t) => t.dim,
            VectorSource::External { dim, .. } => *dim,
        }
    }

    pub fn provider(&self) -> Provider {
        match self {
            VectorSource::Table(_) => Provider::Skipgram,
            VectorSource::External { .. } => Provider::External,
        }
    }

    /// Padded `window_len x dim` input for one window.
    pub fn sample(&self, w: &LabeledWindow) -> Result<Sample, FeatureError> {
        let window_len = w.tokens.len() + w.pad;
        let dim = self.dim();
        let mut x = vec![0.0f32; window_len * dim];
        match self {
            VectorSource::Table(t) => {
                for (i, tok) in w.tokens.iter().enumerate() {
                    let row = t.center(t.lookup(tok));
                    for (dst, &v) in x[i * dim..(i + 1) * dim].iter_mut().zip(row) {
                        *dst = v as f32;
                    }
                }
            }
            VectorSource::External { sequences, .. } => {
                let key = sequence_key(&w.repo, &w.commit, &w.path);
                let seq = sequences
                    .get(&key)
                    .ok_or_else(|| FeatureError::MissingSequence(key.clone()))?;
                if seq.dim != dim {
                    return Err(FeatureError::Dim {
                        expected: dim,
                        found: seq.dim,
                    });
                }
                let entries =
                    seq.entries
                        .get(w.start..w.start + w.tokens.len())
                        .ok_or_else(|| FeatureError::Misaligned {
                            key: key.clone(),
                            start: w.start,
                        })?;
                for (i, (e, span)) in entries.iter().zip(&w.spans).enumerate() {
                    if e.span != *span {
                        return Err(FeatureError::Misaligned { key, start: w.start });
                    }
                    x[i * dim..(i + 1) * dim].copy_from_slice(&e.vector);
                }
            }
        }
        Ok(Sample::padded(x, window_len, w.tokens.len(), f64::from(w.label)))
    }

    pub fn samples(&self, windows: &[LabeledWindow]) -> Result<Vec<Sample>, FeatureError> {
        windows.iter().map(|w| self.sample(w)).collect()
    }
}

/// Label and window a mined change over an external provider's token
/// sequence instead of the lexer's.
pub fn external_windows_for_change(
    change: &MinedChange,
    seq: &VectorSequence,
    opts: &WindowOptions,
) -> Result<Vec<LabeledWindow>, FeatureError> {
    let lines = line_spans(&change.pre_image);
    let spans = seq.spans();
    let labels = label_spans(change, &spans, &lines)?;
    Ok(make_windows_from(
        &seq.tokens(),
        &spans,
        &labels,
        opts,
        &FileOrigin::of(change),
    )?)
}
