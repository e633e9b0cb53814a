//! End-to-end run: mine → embed → dataset → train → scan → eval.
//!
//! Each stage records the hash of its inputs and of every output in
//! `stages.json` under the work directory. A stage is skipped when its input
//! hash is unchanged and all its outputs still exist with the recorded
//! hashes; once a stage runs, every later stage runs too.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use vulnhound_core::dataset::{read_jsonl, write_jsonl};
use vulnhound_core::embed::{Format, Provider};
use vulnhound_core::evalkit::{comparison_table, compute_metrics, read_verdict_csv, score_files};
use vulnhound_core::miner::repository_fingerprint;
use vulnhound_core::rnn::ModelFile;

use crate::config::PipelineConfig;
use crate::ops::{self, sha256_bytes, sha256_file, Vectors};
use crate::scan;

pub const STATE_FILE: &str = "stages.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const CHANGES: &str = "changes.jsonl";
pub const TABLE: &str = "embedding.cvec";
pub const DATASET: &str = "dataset.jsonl";
pub const DATASET_META: &str = "dataset.meta.json";
pub const MODEL: &str = "model.vlsm";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const SCAN_JSON: &str = "scan_report.json";
pub const SCAN_TEXT: &str = "scan_report.txt";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_TEXT: &str = "eval.txt";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    input_hash: String,
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub stages: Vec<StageSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub statuses: Vec<(String, StageStatus)>,
    pub summary: Summary,
}

impl Outcome {
    pub fn status(&self, stage: &str) -> Option<StageStatus> {
        self.statuses.iter().find(|(s, _)| s == stage).map(|(_, st)| *st)
    }
}

struct Runner<'a> {
    dir: &'a Path,
    state: BTreeMap<String, StageRecord>,
    upstream_ran: bool,
    statuses: Vec<(String, StageStatus)>,
    summary: Vec<StageSummary>,
}

impl Runner<'_> {
    /// Runs `body` unless the stage is up to date. `inputs` describes
    /// everything the stage reads; `body` writes `outputs` (relative to the
    /// work directory).
    fn stage(
        &mut self,
        name: &str,
        inputs: impl FnOnce() -> Result<serde_json::Value>,
        outputs: &[&str],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let inputs = inputs().with_context(|| format!("stage {name} failed"))?;
        let input_hash = sha256_bytes(&serde_json::to_vec(&inputs)?);
        let fresh = !self.upstream_ran
            && self.state.get(name).is_some_and(|rec| {
                rec.input_hash == input_hash
                    && rec.outputs.len() == outputs.len()
                    && outputs.iter().all(|o| {
                        rec.outputs
                            .get(*o)
                            .is_some_and(|h| sha256_file(&self.dir.join(o)).is_ok_and(|cur| &cur == h))
                    })
            });
        if fresh {
            log::info!("stage {name}: up to date");
            self.statuses.push((name.to_string(), StageStatus::Skipped));
        } else {
            log::info!("stage {name}: running");
            body().with_context(|| format!("stage {name} failed"))?;
            self.upstream_ran = true;
            self.statuses.push((name.to_string(), StageStatus::Ran));
            let mut rec = StageRecord {
                input_hash,
                outputs: BTreeMap::new(),
            };
            for o in outputs {
                let h = sha256_file(&self.dir.join(o)).with_context(|| format!("stage {name} did not write {o}"))?;
                rec.outputs.insert(o.to_string(), h);
            }
            self.state.insert(name.to_string(), rec);
            ops::write_json(&self.dir.join(STATE_FILE), &self.state)?;
        }
        let rec = &self.state[name];
        self.summary.push(StageSummary {
            stage: name.to_string(),
            artifacts: outputs
                .iter()
                .map(|o| Artifact {
                    path: o.to_string(),
                    sha256: rec.outputs[*o].clone(),
                })
                .collect(),
        });
        Ok(())
    }

    fn hash(&self, name: &str) -> Result<String> {
        sha256_file(&self.dir.join(name))
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Outcome> {
    cfg.validate()?;
    let provider = cfg.provider()?;
    let repos = cfg
        .repos
        .as_deref()
        .context("`repos` must be set to run the pipeline")?;
    if provider == Provider::External && cfg.vectors.is_none() {
        bail!("provider \"external\" needs `vectors` (CVEC file for the mined pre-images)");
    }
    if provider == Provider::External && !cfg.scan.is_empty() && cfg.scan_vectors.is_none() {
        bail!("provider \"external\" needs `scan_vectors` to scan files");
    }
    let dir = cfg.work_dir.as_path();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let state = match std::fs::read(dir.join(STATE_FILE)) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
            log::warn!("ignoring unreadable {STATE_FILE}: {e}");
            BTreeMap::new()
        }),
        Err(_) => BTreeMap::new(),
    };
    let mut r = Runner {
        dir,
        state,
        upstream_ran: false,
        statuses: Vec::new(),
        summary: Vec::new(),
    };
    let snapshot = cfg.snapshot();
    let at = |name: &str| dir.join(name);

    // mine
    let filter = ops::keyword_filter(cfg.keywords.as_deref())?;
    r.stage(
        "mine",
        || {
            let mut fingerprints = Vec::new();
            for repo in vulnhound_core::miner::discover_repositories(repos)? {
                let name = repo.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                fingerprints.push(json!([name, repository_fingerprint(&repo)?]));
            }
            Ok(json!({"repos": fingerprints, "keywords": filter.patterns(), "max_files_per_commit": cfg.max_files_per_commit}))
        },
        &[CHANGES],
        || {
            let outcome = ops::mine(repos, &filter, cfg.max_files_per_commit)?;
            log::info!("mined {} changes", outcome.changes.len());
            ops::write_changes(&at(CHANGES), &outcome.changes)
        },
    )?;
    let changes_hash = r.hash(CHANGES)?;

    // embed
    let vectors_path: PathBuf = match provider {
        Provider::Skipgram if cfg.vectors.is_some() => cfg.vectors.clone().expect("checked"),
        Provider::Skipgram => {
            r.stage(
                "embed",
                || Ok(json!({"changes": changes_hash, "sg": cfg.sg_config()})),
                &[TABLE],
                || {
                    let changes = ops::read_changes(&at(CHANGES))?;
                    ops::train_embedding(&ops::corpus(&changes), cfg, &at(TABLE), Format::Binary).map(|_| ())
                },
            )?;
            at(TABLE)
        }
        Provider::External => cfg.vectors.clone().expect("checked above"),
    };
    let vectors_hash = sha256_file(&vectors_path).context("stage dataset failed")?;

    // dataset
    r.stage(
        "dataset",
        || {
            Ok(json!({
                "changes": changes_hash,
                "vectors": if provider == Provider::External { Some(&vectors_hash) } else { None },
                "config": snapshot,
            }))
        },
        &[DATASET, DATASET_META],
        || {
            let changes = ops::read_changes(&at(CHANGES))?;
            let external = match provider {
                Provider::External => match Vectors::load(&vectors_path)? {
                    Vectors::External { sequences, .. } => Some(sequences),
                    Vectors::Table(_) => bail!(
                        "{} holds a skip-gram table, not external vectors",
                        vectors_path.display()
                    ),
                },
                Provider::Skipgram => None,
            };
            let (windows, report) = ops::build_dataset(&changes, cfg, external.as_deref())?;
            write_jsonl(&at(DATASET), &windows)?;
            ops::write_json(&at(DATASET_META), &report)
        },
    )?;
    let dataset_hash = r.hash(DATASET)?;

    // train
    r.stage(
        "train",
        || Ok(json!({"dataset": dataset_hash, "vectors": vectors_hash, "config": snapshot})),
        &[MODEL, TRAIN_REPORT],
        || {
            let windows = read_jsonl(&at(DATASET))?;
            let vectors = Vectors::load(&vectors_path)?;
            let (model, summary) = ops::train_model(windows, &vectors, &vectors_hash, cfg)?;
            model.save(&at(MODEL))?;
            ops::write_json(&at(TRAIN_REPORT), &summary)
        },
    )?;
    let model_hash = r.hash(MODEL)?;

    // scan
    if !cfg.scan.is_empty() {
        let scan_vectors = match provider {
            Provider::Skipgram => vectors_path.clone(),
            Provider::External => cfg.scan_vectors.clone().expect("checked above"),
        };
        r.stage(
            "scan",
            || {
                let files: Vec<serde_json::Value> = scan::collect_inputs(&cfg.scan)
                    .into_iter()
                    .map(|p| {
                        let h = sha256_file(Path::new(&p)).unwrap_or_else(|_| "unreadable".into());
                        json!([p, h])
                    })
                    .collect();
                Ok(json!({"model": model_hash, "vectors": sha256_file(&scan_vectors)?, "files": files}))
            },
            &[SCAN_JSON, SCAN_TEXT],
            || {
                let model = ModelFile::load(&at(MODEL))?;
                let vectors = Vectors::load(&scan_vectors)?;
                let report = scan::scan(&cfg.scan, &model, &model_hash, &vectors)?;
                ops::write_json(&at(SCAN_JSON), &report)?;
                std::fs::write(at(SCAN_TEXT), scan::render_text(&report))?;
                Ok(())
            },
        )?;

        if let Some(truth) = &cfg.truth {
            let scan_hash = r.hash(SCAN_JSON)?;
            r.stage(
                "eval",
                || Ok(json!({"scan": scan_hash, "truth": sha256_file(truth)?})),
                &[EVAL_JSON, EVAL_TEXT],
                || {
                    let report: scan::ScanReport = ops::read_json(&at(SCAN_JSON))?;
                    let truth = read_verdict_csv(truth)?;
                    let confusion = score_files(&report.verdicts(), &truth)?;
                    let metrics = compute_metrics(&confusion)?;
                    ops::write_json(&at(EVAL_JSON), &json!({"confusion": confusion, "metrics": metrics}))?;
                    let table = comparison_table(&[("model".to_string(), confusion)])?;
                    std::fs::write(at(EVAL_TEXT), table.text)?;
                    Ok(())
                },
            )?;
        }
    }

    let summary = Summary { stages: r.summary };
    ops::write_json(&at(SUMMARY_FILE), &summary)?;
    Ok(Outcome {
        statuses: r.statuses,
        summary,
    })
}
