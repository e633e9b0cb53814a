//! CVEC: binary exchange container for per-token vectors with byte spans.
//!
//! All integers little-endian.
//!
//! ```text
//! header    "CVEC" | version u32 (=1) | dim u32 | sequence count u32
//! sequence  path len u16 | path (UTF-8) | entry count u32
//! entry     token len u16 | token (UTF-8) | span start u64 | span end u64
//!           | dim x f32
//! vocab     "VOCB" | count u32 | per word: token len u16 | token
//!           | occurrence count u64 | dim x f32          (optional trailer)
//! ```
//!
//! Embedding tables are stored as a container with zero sequences and a
//! vocabulary trailer. A JSON-lines mirror (`Format::Jsonl`) carries the same
//! content for debugging.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Provider, VectorEntry, VectorSequence};
use crate::pylex::Span;

pub const MAGIC: &[u8; 4] = b"CVEC";
pub const VOCAB_MAGIC: &[u8; 4] = b"VOCB";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CvecError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version {found} at byte {offset} (expected {VERSION})")]
    VersionMismatch { offset: usize, found: u32 },
    #[error("invalid dimension {dim} at byte {offset}")]
    InvalidDim { offset: usize, dim: u32 },
    #[error("truncated record at byte {offset}: expected {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("non-finite vector component at byte {offset}")]
    NonFinite { offset: usize },
    #[error("non-monotone span at byte {offset}: start {start} after previous start {previous}")]
    NonMonotoneSpan { offset: usize, start: u64, previous: u64 },
    #[error("inverted span [{start},{end}) at byte {offset}")]
    InvertedSpan { offset: usize, start: u64, end: u64 },
    #[error("invalid UTF-8 at byte {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("{len} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, len: usize },
    #[error("cannot store: {0}")]
    Unstorable(String),
    #[error("malformed JSONL at line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Binary,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" | "cvec" => Ok(Format::Binary),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown vector format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub count: u64,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dim: usize,
    pub sequences: Vec<VectorSequence>,
    pub vocab: Option<Vec<VocabEntry>>,
}

impl Container {
    pub fn from_table(table: &EmbeddingTable) -> Self {
        let vocab = table
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| VocabEntry {
                token: w.clone(),
                count: table.counts[i],
                vector: table.center(i).iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Container {
            dim: table.dim,
            sequences: Vec::new(),
            vocab: Some(vocab),
        }
    }

    /// Inference-only table (center vectors, widened from binary32).
    pub fn to_table(&self) -> Option<EmbeddingTable> {
        let vocab = self.vocab.as_ref()?;
        let words = vocab.iter().map(|v| v.token.clone()).collect();
        let counts = vocab.iter().map(|v| v.count).collect();
        let input = vocab
            .iter()
            .flat_map(|v| v.vector.iter().map(|&x| f64::from(x)))
            .collect();
        Some(EmbeddingTable::new(self.dim, words, counts, input, Vec::new()))
    }
}

// ---------------------------------------------------------------------------
// binary encoding

fn check_vector(v: &[f32], dim: usize, what: &str) -> Result<(), CvecError> {
    if v.len() != dim {
        return Err(CvecError::Unstorable(format!(
            "{what}: vector length {} != dim {dim}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CvecError::Unstorable(format!("{what}: non-finite component")));
    }
    Ok(())
}

fn put_str16(out: &mut Vec<u8>, s: &str, what: &str) -> Result<(), CvecError> {
    let len = u16::try_from(s.len()).map_err(|_| CvecError::Unstorable(format!("{what} longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode(c: &Container) -> Result<Vec<u8>, CvecError> {
    let dim = u32::try_from(c.dim)
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| CvecError::Unstorable(format!("dim {}", c.dim)))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    let count = u32::try_from(c.sequences.len()).map_err(|_| CvecError::Unstorable("too many sequences".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for seq in &c.sequences {
        if seq.dim != c.dim {
            return Err(CvecError::Unstorable(format!(
                "{}: sequence dim {} != container dim {}",
                seq.file_path, seq.dim, c.dim
            )));
        }
        put_str16(&mut out, &seq.file_path, "path")?;
        let n = u32::try_from(seq.entries.len()).map_err(|_| CvecError::Unstorable("too many entries".into()))?;
        out.extend_from_slice(&n.to_le_bytes());
        let mut prev = 0usize;
        for e in &seq.entries {
            if e.span.start < prev || e.span.start > e.span.end {
                return Err(CvecError::Unstorable(format!(
                    "{}: span {} breaks monotone order",
                    seq.file_path, e.span
                )));
            }
            prev = e.span.start;
            check_vector(&e.vector, c.dim, &seq.file_path)?;
            put_str16(&mut out, &e.token, "token")?;
            out.extend_from_slice(&(e.span.start as u64).to_le_bytes());
            out.extend_from_slice(&(e.span.end as u64).to_le_bytes());
            for x in &e.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    if let Some(vocab) = &c.vocab {
        out.extend_from_slice(VOCAB_MAGIC);
        let n = u32::try_from(vocab.len()).map_err(|_| CvecError::Unstorable("vocab too large".into()))?;
        out.extend_from_slice(&n.to_le_bytes());
        for v in vocab {
            check_vector(&v.vector, c.dim, "vocab")?;
            put_str16(&mut out, &v.token, "token")?;
            out.extend_from_slice(&v.count.to_le_bytes());
            for x in &v.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CvecError> {
        if self.buf.len() - self.pos < n {
            return Err(CvecError::Truncated { offset: self.pos, what });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CvecError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CvecError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CvecError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn str16(&mut self, what: &'static str) -> Result<String, CvecError> {
        let len = self.u16(what)? as usize;
        let at = self.pos;
        let bytes = self.take(len, what)?;
        std::str::from_utf8(bytes)
            .map(str::to_string)
            .map_err(|e| CvecError::InvalidUtf8 {
                offset: at + e.valid_up_to(),
            })
    }

    fn vector(&mut self, dim: usize) -> Result<Vec<f32>, CvecError> {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            let at = self.pos;
            let x = f32::from_le_bytes(self.take(4, "vector component")?.try_into().unwrap());
            if !x.is_finite() {
                return Err(CvecError::NonFinite { offset: at });
            }
            v.push(x);
        }
        Ok(v)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode(buf: &[u8]) -> Result<Container, CvecError> {
    let mut r = Reader { buf, pos: 0 };
    if r.remaining() < 4 || &buf[..4] != MAGIC {
        return Err(CvecError::BadMagic { offset: 0 });
    }
    r.pos = 4;
    let at = r.pos;
    let version = r.u32("format version")?;
    if version != VERSION {
        return Err(CvecError::VersionMismatch {
            offset: at,
            found: version,
        });
    }
    let at = r.pos;
    let dim32 = r.u32("dim")?;
    if dim32 == 0 {
        return Err(CvecError::InvalidDim { offset: at, dim: dim32 });
    }
    let dim = dim32 as usize;
    let count = r.u32("sequence count")?;
    let mut sequences = Vec::new();
    for _ in 0..count {
        let file_path = r.str16("sequence path")?;
        let n = r.u32("entry count")?;
        let mut entries = Vec::new();
        let mut prev: Option<u64> = None;
        for _ in 0..n {
            let token = r.str16("token")?;
            let at = r.pos;
            let start = r.u64("span start")?;
            let end = r.u64("span end")?;
            if start > end {
                return Err(CvecError::InvertedSpan { offset: at, start, end });
            }
            if let Some(p) = prev {
                if start < p {
                    return Err(CvecError::NonMonotoneSpan {
                        offset: at,
                        start,
                        previous: p,
                    });
                }
            }
            prev = Some(start);
            let vector = r.vector(dim)?;
            entries.push(VectorEntry {
                token,
                span: Span::new(start as usize, end as usize),
                vector,
            });
        }
        sequences.push(VectorSequence {
            file_path,
            provider: Provider::External,
            dim,
            entries,
        });
    }
    let mut vocab = None;
    if r.remaining() > 0 {
        let at = r.pos;
        if r.remaining() < 4 || &buf[at..at + 4] != VOCAB_MAGIC {
            return Err(CvecError::TrailingBytes {
                offset: at,
                len: r.remaining(),
            });
        }
        r.pos += 4;
        let n = r.u32("vocabulary size")?;
        let mut words = Vec::new();
        for _ in 0..n {
            let token = r.str16("vocabulary token")?;
            let count = r.u64("vocabulary count")?;
            let vector = r.vector(dim)?;
            words.push(VocabEntry { token, count, vector });
        }
        if r.remaining() > 0 {
            return Err(CvecError::TrailingBytes {
                offset: r.pos,
                len: r.remaining(),
            });
        }
        vocab = Some(words);
    }
    Ok(Container { dim, sequences, vocab })
}

// ---------------------------------------------------------------------------
// JSONL mirror

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    magic: String,
    version: u32,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonRecord {
    Sequence { path: String, entries: Vec<JsonEntry> },
    Vocab { vocab: Vec<VocabEntry> },
}

#[derive(Serialize, Deserialize)]
struct JsonEntry {
    token: String,
    span: Span,
    vector: Vec<f32>,
}

pub fn encode_jsonl(c: &Container) -> Result<Vec<u8>, CvecError> {
    // Same validation as the binary route.
    encode(c)?;
    let mut out = Vec::new();
    let header = JsonHeader {
        magic: "CVEC".into(),
        version: VERSION,
        dim: c.dim,
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.push(b'\n');
    for seq in &c.sequences {
        let rec = JsonRecord::Sequence {
            path: seq.file_path.clone(),
            entries: seq
                .entries
                .iter()
                .map(|e| JsonEntry {
                    token: e.token.clone(),
                    span: e.span,
                    vector: e.vector.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.push(b'\n');
    }
    if let Some(vocab) = &c.vocab {
        serde_json::to_writer(&mut out, &JsonRecord::Vocab { vocab: vocab.clone() }).map_err(std::io::Error::from)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn decode_jsonl(text: &str) -> Result<Container, CvecError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let jerr = |line: usize, e: serde_json::Error| CvecError::Jsonl {
        line: line + 1,
        message: e.to_string(),
    };
    let (i, first) = lines.next().ok_or(CvecError::Jsonl {
        line: 1,
        message: "missing header".into(),
    })?;
    let header: JsonHeader = serde_json::from_str(first).map_err(|e| jerr(i, e))?;
    if header.magic != "CVEC" {
        return Err(CvecError::BadMagic { offset: 0 });
    }
    if header.version != VERSION {
        return Err(CvecError::VersionMismatch {
            offset: 0,
            found: header.version,
        });
    }
    let mut c = Container {
        dim: header.dim,
        sequences: Vec::new(),
        vocab: None,
    };
    for (i, line) in lines {
        match serde_json::from_str::<JsonRecord>(line).map_err(|e| jerr(i, e))? {
            JsonRecord::Sequence { path, entries } => c.sequences.push(VectorSequence {
                file_path: path,
                provider: Provider::External,
                dim: header.dim,
                entries: entries
                    .into_iter()
                    .map(|e| VectorEntry {
                        token: e.token,
                        span: e.span,
                        vector: e.vector,
                    })
                    .collect(),
            }),
            JsonRecord::Vocab { vocab } => c.vocab = Some(vocab),
        }
    }
    // Re-validate through the binary codec so both formats accept the same set.
    decode(&encode(&c).map_err(|e| CvecError::Jsonl {
        line: 0,
        message: e.to_string(),
    })?)
}

pub fn read_container(path: &Path) -> Result<Container, CvecError> {
    let bytes = fs::read(path)?;
    if bytes.first() == Some(&b'{') {
        let text = std::str::from_utf8(&bytes).map_err(|e| CvecError::InvalidUtf8 {
            offset: e.valid_up_to(),
        })?;
        decode_jsonl(text)
    } else {
        decode(&bytes)
    }
}

pub fn write_container(path: &Path, c: &Container, format: Format) -> Result<(), CvecError> {
    let bytes = match format {
        Format::Binary => encode(c)?,
        Format::Jsonl => encode_jsonl(c)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_vectors(path: &Path) -> Result<Vec<VectorSequence>, CvecError> {
    read_container(path).map(|c| c.sequences)
}

/// Writes `seqs` as a binary container. All sequences must share one dim;
/// an empty list needs `dim` to be given.
pub fn store_vectors(seqs: &[VectorSequence], dim: usize, path: &Path) -> Result<(), CvecError> {
    let c = Container {
        dim,
        sequences: seqs.to_vec(),
        vocab: None,
    };
    write_container(path, &c, Format::Binary)
}

pub fn store_table(table: &EmbeddingTable, path: &Path, format: Format) -> Result<(), CvecError> {
    write_container(path, &Container::from_table(table), format)
}
