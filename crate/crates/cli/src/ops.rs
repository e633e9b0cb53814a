//! The pipeline stages as plain functions; subcommands and `pipeline` both
//! call these.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vulnhound_core::dataset::{
    self, dedup, downsample_negatives, split, windows_for_change, DatasetStats, DedupReport, LabeledWindow,
};
use vulnhound_core::embed::cvec::{self, Container};
use vulnhound_core::embed::{train_skipgram, EmbeddingTable, Format, Provider, VectorSequence};
use vulnhound_core::evalkit::{compute_metrics, Confusion, Metrics};
use vulnhound_core::features::{external_windows_for_change, VectorSource};
use vulnhound_core::miner::{self, KeywordFilter, MineOptions, MineOutcome, MinedChange};
use vulnhound_core::pylex::{tokenize_str, TokenStream};
use vulnhound_core::rnn::{self, EpochStats, ModelFile, ModelMeta};

use crate::config::PipelineConfig;

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

// ---------------------------------------------------------------------------
// mined changes

pub fn write_changes(path: &Path, changes: &[MinedChange]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for c in changes {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_changes(path: &Path) -> Result<Vec<MinedChange>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: MinedChange = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(c);
    }
    Ok(out)
}

pub fn keyword_filter(path: Option<&Path>) -> Result<KeywordFilter> {
    Ok(match path {
        Some(p) => KeywordFilter::from_file(p)?,
        None => KeywordFilter::default(),
    })
}

pub fn mine(repos: &Path, filter: &KeywordFilter, max_files_per_commit: usize) -> Result<MineOutcome> {
    let list = miner::discover_repositories(repos)?;
    if list.is_empty() {
        bail!("no git repositories found under {}", repos.display());
    }
    let opts = MineOptions {
        max_files_per_commit,
        ..MineOptions::default()
    };
    let outcome = miner::mine_repositories(&list, filter, &opts)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    Ok(outcome)
}

/// Writes each pre-image to `dir/<repo>/<commit>/<path>`, the key external
/// vectors for training must use.
pub fn dump_preimages(changes: &[MinedChange], dir: &Path) -> Result<()> {
    for c in changes {
        let p = dir.join(c.key());
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, &c.pre_image).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// dataset

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub changes: usize,
    pub stats: DatasetStats,
    pub dedup: Option<DedupReport>,
    pub config: serde_json::Value,
}

/// Label and window every change, then dedup / downsample per config.
/// `external` supplies the provider's own token sequences for the external
/// route.
pub fn build_dataset(
    changes: &[MinedChange],
    cfg: &PipelineConfig,
    external: Option<&[VectorSequence]>,
) -> Result<(Vec<LabeledWindow>, DatasetReport)> {
    let opts = cfg.window_options();
    let lookup = external.map(|seqs| {
        seqs.iter()
            .map(|s| (s.file_path.as_str(), s))
            .collect::<std::collections::HashMap<_, _>>()
    });
    let per_file: Vec<Vec<LabeledWindow>> = changes
        .par_iter()
        .map(|c| -> Result<Vec<LabeledWindow>> {
            match &lookup {
                None => Ok(windows_for_change(c, &tokenize_str(&c.pre_image), &opts)?),
                Some(map) => {
                    let key = c.key();
                    let seq = map
                        .get(key.as_str())
                        .with_context(|| format!("no external vectors for {key}"))?;
                    Ok(external_windows_for_change(c, seq, &opts)?)
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut windows: Vec<LabeledWindow> = per_file.into_iter().flatten().collect();
    let mut dedup_report = None;
    if cfg.dedup {
        let (kept, report) = dedup(windows);
        if report.conflicts > 0 {
            log::warn!(
                "dropped {} windows with conflicting labels",
                report.conflicting_windows_dropped
            );
        }
        windows = kept;
        dedup_report = Some(report);
    }
    if let Some(keep) = cfg.negative_keep {
        windows = downsample_negatives(windows, keep, cfg.seed);
    }
    let report = DatasetReport {
        changes: changes.len(),
        stats: dataset::stats(&windows),
        dedup: dedup_report,
        config: cfg.snapshot(),
    };
    Ok((windows, report))
}

// ---------------------------------------------------------------------------
// vectors

/// What a `--vectors` file turned out to hold.
pub enum Vectors {
    Table(EmbeddingTable),
    External { dim: usize, sequences: Vec<VectorSequence> },
}

impl Vectors {
    pub fn load(path: &Path) -> Result<Self> {
        let c = cvec::read_container(path).with_context(|| format!("loading vectors {}", path.display()))?;
        Ok(match c.to_table() {
            Some(table) => Vectors::Table(table),
            None => Vectors::External {
                dim: c.dim,
                sequences: c.sequences,
            },
        })
    }

    pub fn provider(&self) -> Provider {
        match self {
            Vectors::Table(_) => Provider::Skipgram,
            Vectors::External { .. } => Provider::External,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Vectors::Table(t) => t.dim,
            Vectors::External { dim, .. } => *dim,
        }
    }

    pub fn source(&self) -> VectorSource<'_> {
        match self {
            Vectors::Table(t) => VectorSource::Table(t),
            Vectors::External { dim, sequences } => VectorSource::external(*dim, sequences),
        }
    }
}

pub fn corpus(changes: &[MinedChange]) -> Vec<TokenStream> {
    changes.iter().map(|c| tokenize_str(&c.pre_image)).collect()
}

pub fn train_embedding(
    corpus: &[TokenStream],
    cfg: &PipelineConfig,
    out: &Path,
    format: Format,
) -> Result<EmbeddingTable> {
    let table = train_skipgram(corpus, &cfg.sg_config())?;
    cvec::write_container(out, &Container::from_table(&table), format)?;
    Ok(table)
}

// ---------------------------------------------------------------------------
// classifier

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub window_level: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub partitions: PartitionSizes,
    pub epochs: Vec<EpochStats>,
    pub stopped_early: bool,
    pub test: Option<Confusion>,
    pub test_metrics: Option<Metrics>,
    pub vectors_sha256: String,
    pub config: serde_json::Value,
}

pub fn train_model(
    windows: Vec<LabeledWindow>,
    vectors: &Vectors,
    vectors_sha256: &str,
    cfg: &PipelineConfig,
) -> Result<(ModelFile, TrainSummary)> {
    let provider = cfg.provider()?;
    if vectors.provider() != provider {
        bail!(
            "vectors file holds {} vectors but the configured provider is {provider}",
            vectors.provider()
        );
    }
    if let Some(w) = windows.iter().find(|w| w.tokens.len() + w.pad != cfg.window_len) {
        bail!(
            "dataset window at {}:{} has length {}, config says window_len = {}",
            w.path,
            w.start,
            w.tokens.len() + w.pad,
            cfg.window_len
        );
    }
    let parts = split(windows, cfg.ratios(), cfg.seed)?;
    let source = vectors.source();
    let train = source.samples(&parts.train)?;
    let validation = source.samples(&parts.validation)?;
    let test = source.samples(&parts.test)?;
    if train.is_empty() {
        bail!("training partition is empty");
    }
    let tc = cfg.train_config();
    let report = rnn::train(&train, &validation, &tc)?;
    log::info!("trained {} epochs in {:.1?}", report.epochs.len(), report.wall_time);

    let (test_conf, test_metrics) = if test.is_empty() {
        (None, None)
    } else {
        let (_, c) = rnn::train::evaluate(&report.params, &test, tc.threshold)?;
        (Some(c), compute_metrics(&c).ok())
    };
    let mut snapshot = cfg.snapshot();
    snapshot["vectors_sha256"] = serde_json::Value::String(vectors_sha256.to_string());
    let model = ModelFile {
        params: report.params,
        threshold: tc.threshold,
        meta: ModelMeta {
            window: cfg.window_spec(),
            provider,
            config: snapshot,
        },
    };
    let summary = TrainSummary {
        partitions: PartitionSizes {
            train: parts.train.len(),
            validation: parts.validation.len(),
            test: parts.test.len(),
            window_level: parts.window_level,
        },
        epochs: report.epochs,
        stopped_early: report.stopped_early,
        test: test_conf,
        test_metrics,
        vectors_sha256: vectors_sha256.to_string(),
        config: cfg.snapshot(),
    };
    Ok((model, summary))
}

/// Window-level confusion of `model` over `windows`.
pub fn evaluate_windows(model: &ModelFile, vectors: &Vectors, windows: &[LabeledWindow]) -> Result<Confusion> {
    check_compatible(model, vectors)?;
    let samples = vectors.source().samples(windows)?;
    let (_, c) = rnn::train::evaluate(&model.params, &samples, model.threshold)?;
    Ok(c)
}

pub fn check_compatible(model: &ModelFile, vectors: &Vectors) -> Result<()> {
    if model.params.dim != vectors.dim() {
        bail!(
            "model expects {}-dimensional vectors but the vectors file has dim {}",
            model.params.dim,
            vectors.dim()
        );
    }
    if model.meta.provider != vectors.provider() {
        bail!(
            "model was trained on {} vectors but {} vectors were supplied",
            model.meta.provider,
            vectors.provider()
        );
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
