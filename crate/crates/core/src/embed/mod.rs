//! Per-token dense vectors.
//!
//! Two providers feed the classifier:
//!
//! * [`skipgram`] trains a word2vec-style table (skip-gram with negative
//!   sampling) over lexical tokens; [`embed_stream`] maps a token stream
//!   through it.
//! * [`cvec`] reads per-occurrence vectors computed elsewhere (for instance a
//!   code transformer) from the CVEC exchange container.
//!
//! Both end up as [`VectorSequence`]s. The classifier reads `dim` from the
//! data and never assumes a size.

pub mod cvec;
pub mod skipgram;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pylex::{Span, TokenStream};

pub use cvec::{load_vectors, store_vectors, Container, CvecError, Format};
pub use skipgram::{train_skipgram, SgConfig, SkipgramError};

/// Text of the reserved out-of-vocabulary entry (always index 0).
pub const UNK: &str = "<UNK>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Skipgram,
    External,
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provider::Skipgram => "skipgram",
            Provider::External => "external",
        })
    }
}

impl std::str::FromStr for Provider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skipgram" => Ok(Provider::Skipgram),
            "external" => Ok(Provider::External),
            other => Err(format!("unknown provider {other:?} (expected skipgram or external)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEntry {
    pub token: String,
    pub span: Span,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSequence {
    pub file_path: String,
    pub provider: Provider,
    pub dim: usize,
    pub entries: Vec<VectorEntry>,
}

impl VectorSequence {
    pub fn new(file_path: impl Into<String>, provider: Provider, dim: usize) -> Self {
        VectorSequence {
            file_path: file_path.into(),
            provider,
            dim,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn spans(&self) -> Vec<Span> {
        self.entries.iter().map(|e| e.span).collect()
    }

    pub fn tokens(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.token.clone()).collect()
    }
}

/// Vocabulary plus center (input) and context (output) matrices, row-major
/// `|vocab| x dim`. Tables loaded from disk carry only center vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub words: Vec<String>,
    pub counts: Vec<u64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, words: Vec<String>, counts: Vec<u64>, input: Vec<f64>, output: Vec<f64>) -> Self {
        assert_eq!(words.len(), counts.len());
        assert_eq!(input.len(), words.len() * dim);
        assert!(output.is_empty() || output.len() == input.len());
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingTable {
            dim,
            words,
            counts,
            input,
            output,
            index,
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    /// Index of `token`, or the UNK index 0.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn center(&self, idx: usize) -> &[f64] {
        &self.input[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn context(&self, idx: usize) -> &[f64] {
        &self.output[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Center vector of `token` narrowed to binary32.
    pub fn vector_f32(&self, token: &str) -> Vec<f32> {
        self.center(self.lookup(token)).iter().map(|&v| v as f32).collect()
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        cosine(self.center(self.lookup(a)), self.center(self.lookup(b)))
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Maps every token to its center vector; unknown tokens get the UNK vector.
pub fn embed_stream(stream: &TokenStream, table: &EmbeddingTable) -> VectorSequence {
    VectorSequence {
        file_path: String::new(),
        provider: Provider::Skipgram,
        dim: table.dim,
        entries: stream
            .tokens
            .iter()
            .map(|t| VectorEntry {
                token: t.text.clone(),
                span: t.span,
                vector: table.vector_f32(&t.text),
            })
            .collect(),
    }
}
