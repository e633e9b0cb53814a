use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vulnhound::config::{PipelineConfig, SEED_ENV};
use vulnhound::ops::{self, sha256_file, Vectors};
use vulnhound::scan::{self, Verdict};
use vulnhound::{exit, exit_code, pipeline, Internal};
use vulnhound_core::dataset::{read_jsonl, write_jsonl};
use vulnhound_core::embed::{Format, Provider};
use vulnhound_core::evalkit::{
    comparison_table, compute_metrics, ingest_sast, read_verdict_csv, score_files, Confusion,
};
use vulnhound_core::rnn::ModelFile;

#[derive(Parser)]
#[command(
    name = "vulnhound",
    version,
    about = "Find SQL injection in Python code with an LSTM trained on mined fix commits"
)]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine fix commits from git repositories into a changes JSONL file.
    Mine {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write each pre-image to DIR/<repo>/<commit>/<path> for an external exporter.
        #[arg(long, value_name = "DIR")]
        dump_preimages: Option<PathBuf>,
    },
    /// Window and label mined changes into a dataset JSONL file.
    BuildDataset {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        changes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a skip-gram embedding table on the pre-images of mined changes.
    TrainEmbedding {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        changes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// binary or jsonl.
        #[arg(long, default_value = "binary")]
        format: String,
    },
    /// Describe the CVEC file an external vector exporter must produce.
    ExportVectors,
    /// Train the LSTM classifier.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training summary JSON (defaults to <out>.report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Scan Python files or directories with a trained model.
    Scan {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// JSON report path; the text rendering goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Files or directories (default: the `scan` config key).
        paths: Vec<PathBuf>,
    },
    /// Score a scan report against file-level ground truth, or a model
    /// against a labeled dataset (window level).
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, conflicts_with_all = ["model", "dataset"])]
        report: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the model's scan against SAST tools on the same ground truth.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scan report JSON from `scan`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// NAME=FORMAT:PATH with FORMAT bandit-json or generic-csv.
        #[arg(long = "tool", value_name = "NAME=FORMAT:PATH")]
        tools: Vec<String>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run mine → embed → dataset → train → scan → eval with staging.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// `--config` plus one flag per configuration key.
#[derive(Args, Serialize, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    repos: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    keywords: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    work_dir: Option<PathBuf>,
    #[arg(long = "scan-path", value_name = "PATH")]
    #[serde(rename = "scan", skip_serializing_if = "Vec::is_empty")]
    scan: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    vectors: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scan_vectors: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<PathBuf>,
    /// skipgram or external.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    provider: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_files_per_commit: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window_len: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_overlap: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    validation_ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dedup: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_keep: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_window: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_negatives: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_min_learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_min_count: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dropout_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let overrides = toml::Table::try_from(self).map_err(|e| Internal(format!("flag table: {e}")))?;
        PipelineConfig::load(self.config.as_deref(), overrides, std::env::var(SEED_ENV).ok())
    }
}

const EXPORT_CONTRACT: &str = "\
External vectors are exchanged as CVEC files (all integers little-endian):

  magic \"CVEC\" | version u32 = 1 | dim u32 | sequence count u32
  per sequence: path length u16, UTF-8 path | entry count u32
  per entry:    token length u16, UTF-8 token | span start u64 | span end u64
                | dim x binary32

Entries are the exporter's own subtokens in file order; spans are byte
offsets [start, end) into the file, non-decreasing and within its length.
Special/control subtokens are omitted.

Sequence paths are lookup keys:
  - vectors for training (`vectors`): <repo>/<commit>/<path> of each mined
    pre-image, exactly the layout `vulnhound mine --dump-preimages DIR` writes
    below DIR;
  - vectors for scanning (`scan_vectors`): each file's path as the scanner
    reaches it from its arguments (e.g. src/app/db.py for `scan src`).

Use `provider = \"external\"` with these files. A CVEC file that carries a
vocabulary section is a skip-gram table instead and is rejected there.
";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    let outcome = std::panic::catch_unwind(|| run(cli.command));
    let code = match outcome {
        Ok(Ok(())) => exit::OK,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
        Err(_) => exit::INTERNAL,
    };
    ExitCode::from(code as u8)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Mine {
            cfg,
            out,
            dump_preimages,
        } => {
            let c = cfg.resolve()?;
            let repos = c.repos.as_deref().context("--repos is required")?;
            let outcome = ops::mine(
                repos,
                &ops::keyword_filter(c.keywords.as_deref())?,
                c.max_files_per_commit,
            )?;
            ops::write_changes(&out, &outcome.changes)?;
            if let Some(dir) = dump_preimages {
                ops::dump_preimages(&outcome.changes, &dir)?;
            }
            println!("{} changes -> {}", outcome.changes.len(), out.display());
        }
        Command::BuildDataset { cfg, changes, out } => {
            let c = cfg.resolve()?;
            let changes = ops::read_changes(&changes)?;
            let external = match c.provider()? {
                Provider::Skipgram => None,
                Provider::External => {
                    let path = c.vectors.as_deref().context("provider external needs --vectors")?;
                    match Vectors::load(path)? {
                        Vectors::External { sequences, .. } => Some(sequences),
                        Vectors::Table(_) => bail!("{} is a skip-gram table, not external vectors", path.display()),
                    }
                }
            };
            let (windows, report) = ops::build_dataset(&changes, &c, external.as_deref())?;
            write_jsonl(&out, &windows)?;
            ops::write_json(&sidecar(&out, "meta.json"), &report)?;
            println!(
                "{} windows ({} positive) -> {}",
                report.stats.windows,
                report.stats.positives,
                out.display()
            );
        }
        Command::TrainEmbedding {
            cfg,
            changes,
            out,
            format,
        } => {
            let c = cfg.resolve()?;
            let format: Format = format.parse().map_err(anyhow::Error::msg)?;
            let changes = ops::read_changes(&changes)?;
            let table = ops::train_embedding(&ops::corpus(&changes), &c, &out, format)?;
            println!("{} words x {} dims -> {}", table.vocab_len(), table.dim, out.display());
        }
        Command::ExportVectors => print!("{EXPORT_CONTRACT}"),
        Command::Train {
            cfg,
            dataset,
            out,
            report,
        } => {
            let c = cfg.resolve()?;
            let vectors_path = c.vectors.clone().context("--vectors is required")?;
            train(&c, &dataset, &vectors_path, &out, report)?;
        }
        Command::Scan { cfg, model, out, paths } => {
            let c = cfg.resolve()?;
            let paths = if paths.is_empty() { c.scan.clone() } else { paths };
            if paths.is_empty() {
                bail!("nothing to scan: give paths or set `scan`");
            }
            let vectors = load_vectors(&c, &scan_vectors(&c, &model)?)?;
            let m = ModelFile::load(&model)?;
            let report = scan::scan(&paths, &m, &sha256_file(&model)?, &vectors)?;
            if let Some(out) = out {
                ops::write_json(&out, &report)?;
            }
            print!("{}", scan::render_text(&report));
        }
        Command::Eval {
            cfg,
            report,
            model,
            dataset,
            out,
        } => {
            let c = cfg.resolve()?;
            let confusion = match (report, model, dataset) {
                (Some(report), _, _) => {
                    let truth = c.truth.as_deref().context("--truth is required with --report")?;
                    let report: scan::ScanReport = ops::read_json(&report)?;
                    if let Some(f) = report.files.iter().find(|f| f.verdict == Verdict::Error) {
                        log::warn!("{} could not be scanned and is left out", f.path);
                    }
                    score_files(&report.verdicts(), &read_verdict_csv(truth)?)?
                }
                (None, Some(model), Some(dataset)) => {
                    let vectors = load_vectors(&c, &scan_vectors(&c, &model)?)?;
                    let m = ModelFile::load(&model)?;
                    ops::evaluate_windows(&m, &vectors, &read_jsonl(&dataset)?)?
                }
                _ => bail!("give either --report with --truth, or --model with --dataset"),
            };
            let metrics = compute_metrics(&confusion)?;
            if let Some(out) = out {
                ops::write_json(&out, &serde_json::json!({"confusion": confusion, "metrics": metrics}))?;
            }
            print!("{}", comparison_table(&[("model".to_string(), confusion)])?.text);
        }
        Command::Compare {
            cfg,
            report,
            tools,
            csv,
        } => {
            let c = cfg.resolve()?;
            let truth_path = c.truth.as_deref().context("--truth is required")?;
            let truth = read_verdict_csv(truth_path)?;
            let mut rows: Vec<(String, Confusion)> = Vec::new();
            if let Some(report) = report {
                let report: scan::ScanReport = ops::read_json(&report)?;
                rows.push(("model".into(), score_files(&report.verdicts(), &truth)?));
            }
            for spec in &tools {
                let (name, rest) = spec
                    .split_once('=')
                    .with_context(|| format!("--tool {spec:?}: expected NAME=FORMAT:PATH"))?;
                let (format, path) = rest
                    .split_once(':')
                    .with_context(|| format!("--tool {spec:?}: expected NAME=FORMAT:PATH"))?;
                let set = ingest_sast(Path::new(path), format)?;
                rows.push((name.to_string(), score_files(&set.verdicts, &truth)?));
            }
            let table = comparison_table(&rows)?;
            if let Some(csv) = csv {
                std::fs::write(&csv, &table.csv).with_context(|| format!("writing {}", csv.display()))?;
            }
            print!("{}", table.text);
        }
        Command::Pipeline { cfg } => {
            let c = cfg.resolve()?;
            let outcome = pipeline::run_pipeline(&c)?;
            for (stage, status) in &outcome.statuses {
                println!("{stage:<8} {status:?}");
            }
            println!("summary -> {}", c.work_dir.join(pipeline::SUMMARY_FILE).display());
        }
    }
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn train(c: &PipelineConfig, dataset: &Path, vectors_path: &Path, out: &Path, report: Option<PathBuf>) -> Result<()> {
    let vectors_sha = sha256_file(vectors_path)?;
    let (model, summary) = ops::train_model(read_jsonl(dataset)?, &Vectors::load(vectors_path)?, &vectors_sha, c)?;
    model.save(out)?;
    let report = report.unwrap_or_else(|| sidecar(out, "report.json"));
    ops::write_json(&report, &summary)?;
    match &summary.test_metrics {
        Some(m) => println!(
            "model -> {} (test F1 {})",
            out.display(),
            m.f1.map_or("-".into(), |f| format!("{:.1}%", f * 100.0))
        ),
        None => println!("model -> {}", out.display()),
    }
    Ok(())
}

/// Loads `path`, insisting it holds the configured provider's vectors.
fn load_vectors(c: &PipelineConfig, path: &Path) -> Result<Vectors> {
    let v = Vectors::load(path)?;
    let want = c.provider()?;
    if v.provider() != want {
        bail!(
            "{} holds {} vectors but the configured provider is {want}",
            path.display(),
            v.provider()
        );
    }
    Ok(v)
}

/// The vectors to embed with at scan/eval time.
fn scan_vectors(c: &PipelineConfig, model: &Path) -> Result<PathBuf> {
    match c.provider()? {
        Provider::External => c
            .scan_vectors
            .clone()
            .or_else(|| c.vectors.clone())
            .context("provider external needs --scan-vectors"),
        Provider::Skipgram => {
            if let Some(v) = &c.vectors {
                return Ok(v.clone());
            }
            // `pipeline` leaves the table next to the model.
            let table = model.with_file_name(pipeline::TABLE);
            if table.exists() {
                Ok(table)
            } else {
                bail!(
                    "--vectors is required (no {} next to {})",
                    pipeline::TABLE,
                    model.display()
                )
            }
        }
    }
}
