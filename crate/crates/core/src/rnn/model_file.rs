//! VLSM model container.
//!
//! ```text
//! "VLSM" | version u32 | dim u32 | hidden u32 | threshold f64
//! | tensors (W_i U_i b_i W_f U_f b_f W_o U_o b_o W_g U_g b_g w b) as f64
//! | metadata length u32 | metadata JSON (UTF-8)
//! ```
//!
//! All integers and floats little-endian. The metadata carries the window
//! geometry and embedding provider so scanning uses the training geometry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LstmParams;
use crate::dataset::WindowSpec;
use crate::embed::Provider;

pub const MAGIC: &[u8; 4] = b"VLSM";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("bad magic (not a VLSM model file)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    VersionMismatch(u32),
    #[error("truncated model file at byte {0}")]
    Truncated(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub window: WindowSpec,
    pub provider: Provider,
    /// Free-form snapshot of the configuration that produced the model.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: LstmParams,
    pub threshold: f64,
    pub meta: ModelMeta,
}

impl ModelFile {
    pub fn encode(&self) -> Result<Vec<u8>, ModelError> {
        let p = &self.params;
        if p.data.len() != LstmParams::len_for(p.dim, p.hidden) {
            return Err(ModelError::Invalid("parameter length does not match shape".into()));
        }
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(24 + 8 * p.data.len() + 4 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(p.dim)?.to_le_bytes());
        out.extend_from_slice(&u32_of(p.hidden)?.to_le_bytes());
        out.extend_from_slice(&self.threshold.to_le_bytes());
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&u32_of(meta.len())?.to_le_bytes());
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, ModelError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], ModelError> {
            let s = buf.get(pos..pos + n).ok_or(ModelError::Truncated(pos))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(ModelError::VersionMismatch(version));
        }
        let dim = u32_at(take(4)?) as usize;
        let hidden = u32_at(take(4)?) as usize;
        if dim == 0 || hidden == 0 {
            return Err(ModelError::Invalid(format!("dim {dim} / hidden {hidden}")));
        }
        let threshold = f64::from_le_bytes(take(8)?.try_into().unwrap());
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ModelError::Invalid(format!("threshold {threshold}")));
        }
        let n = LstmParams::len_for(dim, hidden);
        let raw = take(n.checked_mul(8).ok_or(ModelError::Truncated(0))?)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Invalid("non-finite parameter".into()));
        }
        let meta_len = u32_at(take(4)?) as usize;
        let meta: ModelMeta = serde_json::from_slice(take(meta_len)?)?;
        if pos != buf.len() {
            return Err(ModelError::Invalid(format!("{} trailing bytes", buf.len() - pos)));
        }
        meta.window.validate().map_err(|e| ModelError::Invalid(e.to_string()))?;
        Ok(ModelFile {
            params: LstmParams { dim, hidden, data },
            threshold,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn u32_of(n: usize) -> Result<u32, ModelError> {
    u32::try_from(n).map_err(|_| ModelError::Invalid(format!("{n} exceeds u32")))
}
