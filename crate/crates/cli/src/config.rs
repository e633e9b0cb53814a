//! Flat TOML configuration. Every key has a same-named `--flag`; values are
//! layered file < `VULNHOUND_SEED` (seed only) < flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vulnhound_core::dataset::{SplitRatios, WindowOptions, WindowSpec};
use vulnhound_core::embed::{Provider, SgConfig};
use vulnhound_core::rnn::TrainConfig;

pub const SEED_ENV: &str = "VULNHOUND_SEED";

/// Keys holding filesystem paths; in a config file they are relative to the
/// file's directory.
const PATH_KEYS: &[&str] = &[
    "repos",
    "keywords",
    "work_dir",
    "scan",
    "vectors",
    "scan_vectors",
    "truth",
];

/// `provider` may be written as a string or, by mistake, a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProviderField {
    One(String),
    Many(Vec<String>),
}

impl Default for ProviderField {
    fn default() -> Self {
        ProviderField::One("skipgram".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // inputs and outputs
    pub repos: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub scan: Vec<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub scan_vectors: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub provider: ProviderField,
    pub seed: u64,

    // mining
    pub max_files_per_commit: usize,

    // dataset
    pub window_len: usize,
    pub stride: usize,
    pub min_overlap: usize,
    pub train_ratio: f64,
    pub validation_ratio: f64,
    pub test_ratio: f64,
    pub dedup: bool,
    pub negative_keep: Option<f64>,

    // skip-gram
    pub sg_dim: usize,
    pub sg_window: usize,
    pub sg_negatives: usize,
    pub sg_epochs: usize,
    pub sg_learning_rate: f64,
    pub sg_min_learning_rate: f64,
    pub sg_min_count: u64,

    // classifier
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub threshold: f64,
    pub patience: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = WindowSpec::default();
        let r = SplitRatios::default();
        let sg = SgConfig::default();
        let t = TrainConfig::default();
        PipelineConfig {
            repos: None,
            keywords: None,
            work_dir: PathBuf::from("vulnhound-out"),
            scan: Vec::new(),
            vectors: None,
            scan_vectors: None,
            truth: None,
            provider: ProviderField::default(),
            seed: 1,
            max_files_per_commit: 50,
            window_len: w.window_len,
            stride: w.stride,
            min_overlap: 1,
            train_ratio: r.train,
            validation_ratio: r.validation,
            test_ratio: r.test,
            dedup: true,
            negative_keep: None,
            sg_dim: sg.dim,
            sg_window: sg.window,
            sg_negatives: sg.negatives,
            sg_epochs: sg.epochs,
            sg_learning_rate: sg.learning_rate,
            sg_min_learning_rate: sg.min_learning_rate,
            sg_min_count: sg.min_count,
            epochs: t.epochs,
            batch_size: t.batch_size,
            hidden: t.hidden,
            dropout_rate: t.dropout_rate,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            threshold: t.threshold,
            patience: t.patience,
        }
    }
}

impl PipelineConfig {
    /// Layer `file` (if any), the seed variable and `overrides` (a table of
    /// flag values, already relative to the working directory).
    pub fn load(file: Option<&Path>, overrides: toml::Table, env_seed: Option<String>) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let mut t: toml::Table =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new(""));
                rebase_paths(&mut t, base);
                t
            }
            None => toml::Table::new(),
        };
        if let Some(seed) = env_seed {
            let seed: u64 = seed
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={seed:?} is not an unsigned integer"))?;
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        table.extend(overrides);
        let cfg: PipelineConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn provider(&self) -> Result<Provider> {
        match &self.provider {
            ProviderField::One(p) => p.parse().map_err(anyhow::Error::msg),
            ProviderField::Many(v) if v.len() == 1 => v[0].parse().map_err(anyhow::Error::msg),
            ProviderField::Many(v) => bail!("exactly one provider must be selected, got {v:?}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let provider = self.provider()?;
        self.window_spec().validate()?;
        self.ratios().validate()?;
        self.sg_config().validate()?;
        self.train_config().validate()?;
        if self.min_overlap == 0 {
            bail!("min_overlap must be >= 1");
        }
        if self.max_files_per_commit == 0 {
            bail!("max_files_per_commit must be >= 1");
        }
        if let Some(k) = self.negative_keep {
            if !(k > 0.0 && k <= 1.0) {
                bail!("negative_keep {k} outside (0, 1]");
            }
        }
        if provider == Provider::Skipgram && self.scan_vectors.is_some() {
            bail!("scan_vectors is only used with provider = \"external\"");
        }
        Ok(())
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            window_len: self.window_len,
            stride: self.stride,
        }
    }

    pub fn window_options(&self) -> WindowOptions {
        WindowOptions {
            spec: self.window_spec(),
            min_overlap: self.min_overlap,
        }
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            validation: self.validation_ratio,
            test: self.test_ratio,
        }
    }

    pub fn sg_config(&self) -> SgConfig {
        SgConfig {
            dim: self.sg_dim,
            window: self.sg_window,
            negatives: self.sg_negatives,
            epochs: self.sg_epochs,
            learning_rate: self.sg_learning_rate,
            min_learning_rate: self.sg_min_learning_rate,
            min_count: self.sg_min_count,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            hidden: self.hidden,
            dropout_rate: self.dropout_rate,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            threshold: self.threshold,
            seed: self.seed,
            patience: self.patience,
        }
    }

    /// Settings that shape artifacts, without machine-specific paths; embedded
    /// in every output.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            for key in PATH_KEYS {
                map.remove(*key);
            }
            if let Ok(p) = self.provider() {
                map.insert("provider".into(), serde_json::Value::String(p.to_string()));
            }
        }
        v
    }
}

fn rebase_paths(table: &mut toml::Table, base: &Path) {
    let rebase = |s: &str| -> toml::Value {
        let p = Path::new(s);
        let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        toml::Value::String(joined.to_string_lossy().into_owned())
    };
    for key in PATH_KEYS {
        match table.get_mut(*key) {
            Some(toml::Value::String(s)) => {
                let v = rebase(s);
                table.insert((*key).to_string(), v);
            }
            Some(toml::Value::Array(items)) => {
                for item in items.iter_mut() {
                    if let toml::Value::String(s) = item {
                        *item = rebase(s);
                    }
                }
            }
            _ => {}
        }
    }
}
