//! Mining vulnerability-fix commits out of local git repositories.
//!
//! Commits are selected by case-insensitive keyword match on the commit
//! message. For every selected single-parent commit, each modified `.py`
//! file yields one [`MinedChange`] holding the parent-side (pre-fix) file and
//! the parent-side lines the fix deleted or replaced.
//!
//! Git access goes through the system `git` binary using plumbing commands
//! only (`rev-parse`, `rev-list`, `diff-tree`, `cat-file --batch`). Line
//! diffs are computed here with a longest-common-subsequence diff and zero
//! context, so hunk boundaries do not depend on the installed git's diff
//! heuristics.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MinerError {
    #[error("{0} is not a git repository")]
    NotARepository(PathBuf),
    #[error("git {command} failed in {repo}: {stderr}")]
    Git {
        repo: PathBuf,
        command: String,
        stderr: String,
    },
    #[error("object {id} unreadable in {repo}: {reason}")]
    Object { repo: PathBuf, id: String, reason: String },
    #[error("invalid keyword filter: {0}")]
    Filter(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const DEFAULT_KEYWORDS: &[&str] = &[
    "sql injection fixed",
    "sql injection prevented",
    "fix sql injection",
    "prevent sql injection",
];

/// Case-insensitive substring patterns matched against commit messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordFilter {
    patterns: Vec<String>,
}

impl KeywordFilter {
    pub fn new<I, S>(patterns: I) -> Result<Self, MinerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(|p| p.as_ref().to_lowercase()).collect();
        if patterns.is_empty() {
            return Err(MinerError::Filter("no patterns".into()));
        }
        if patterns.iter().any(|p| p.trim().is_empty()) {
            return Err(MinerError::Filter("empty pattern".into()));
        }
        Ok(KeywordFilter { patterns })
    }

    /// One pattern per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, MinerError> {
        KeywordFilter::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, MinerError> {
        let text = fs::read_to_string(path).map_err(|source| MinerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        KeywordFilter::parse(&text)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn matches(&self, message: &str) -> bool {
        let lower = message.to_lowercase();
        self.patterns.iter().any(|p| lower.contains(p.as_str()))
    }
}

impl Default for KeywordFilter {
    fn default() -> Self {
        KeywordFilter::new(DEFAULT_KEYWORDS).expect("default keywords are valid")
    }
}

pub fn match_commit(message: &str, filter: &KeywordFilter) -> bool {
    filter.matches(message)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedChange {
    pub repo_id: String,
    pub commit_id: String,
    pub file_path: String,
    pub pre_image: String,
    /// 1-based, strictly increasing parent-side line numbers.
    pub changed_lines: Vec<usize>,
    pub commit_message: String,
    /// Committer timestamp, seconds since the epoch.
    #[serde(default)]
    pub commit_time: i64,
}

impl MinedChange {
    /// `<repo>/<commit>/<path>`, the name under which pre-images are dumped
    /// and external vectors are looked up.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.repo_id, self.commit_id, self.file_path)
    }
}

#[derive(Debug, Clone)]
pub struct MineOptions {
    /// Commits touching more files than this are skipped as mass refactors.
    pub max_files_per_commit: usize,
    /// Overrides the repository id (defaults to the directory name).
    pub repo_id: Option<String>,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            max_files_per_commit: 50,
            repo_id: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MineOutcome {
    pub changes: Vec<MinedChange>,
    pub warnings: Vec<String>,
}

pub fn mine_repository(repo: &Path, filter: &KeywordFilter) -> Result<Vec<MinedChange>, MinerError> {
    mine_repository_with(repo, filter, &MineOptions::default()).map(|o| o.changes)
}

pub fn mine_repository_with(
    repo: &Path,
    filter: &KeywordFilter,
    opts: &MineOptions,
) -> Result<MineOutcome, MinerError> {
    let git = Git::open(repo)?;
    let repo_id = opts.repo_id.clone().unwrap_or_else(|| repo_name(repo));
    let mut commits = git.commits()?;
    commits.sort_by(|a, b| (a.time, &a.id).cmp(&(b.time, &b.id)));

    let mut cat = git.cat_file()?;
    let mut out = MineOutcome::default();
    for commit in commits {
        if commit.parents.len() != 1 {
            continue;
        }
        let message = match cat.read(&commit.id).and_then(|raw| commit_message(&raw)) {
            Ok(m) => m,
            Err(e) => {
                warn(&mut out, format!("{repo_id}: skipping commit {}: {e}", commit.id));
                continue;
            }
        };
        if !filter.matches(&message) {
            continue;
        }
        match mine_commit(&git, &mut cat, &repo_id, &commit, &message, opts) {
            Ok((mut changes, warnings)) => {
                out.changes.append(&mut changes);
                for w in warnings {
                    warn(&mut out, w);
                }
            }
            Err(e) => warn(&mut out, format!("{repo_id}: skipping commit {}: {e}", commit.id)),
        }
    }
    cat.close();
    Ok(out)
}

fn warn(out: &mut MineOutcome, msg: String) {
    log::warn!("{msg}");
    out.warnings.push(msg);
}

fn mine_commit(
    git: &Git,
    cat: &mut CatFile,
    repo_id: &str,
    commit: &CommitInfo,
    message: &str,
    opts: &MineOptions,
) -> Result<(Vec<MinedChange>, Vec<String>), MinerError> {
    let entries = git.diff_tree(&commit.parents[0], &commit.id)?;
    let mut warnings = Vec::new();
    if entries.len() > opts.max_files_per_commit {
        warnings.push(format!(
            "{repo_id}: skipping commit {}: touches {} files (limit {})",
            commit.id,
            entries.len(),
            opts.max_files_per_commit
        ));
        return Ok((Vec::new(), warnings));
    }
    let mut entries: Vec<_> = entries
        .into_iter()
        .filter(|e| e.status == 'M' && e.path.ends_with(".py"))
        .collect();
    entries.sort_by(|a, b| a.path.cmp(&b.path));

    let mut changes = Vec::new();
    for entry in entries {
        let old = cat.read(&entry.old_blob)?;
        let new = cat.read(&entry.new_blob)?;
        let (Ok(old), Ok(new)) = (String::from_utf8(old), String::from_utf8(new)) else {
            warnings.push(format!("{repo_id}: {}:{} is not UTF-8, skipped", commit.id, entry.path));
            continue;
        };
        let changed_lines = changed_parent_lines(&old, &new);
        if changed_lines.is_empty() {
            continue;
        }
        changes.push(MinedChange {
            repo_id: repo_id.to_string(),
            commit_id: commit.id.clone(),
            file_path: entry.path,
            pre_image: old,
            changed_lines,
            commit_message: message.to_string(),
            commit_time: commit.time,
        });
    }
    Ok((changes, warnings))
}

/// Mines several repositories in parallel. The result is ordered by input
/// order, then by each repository's own deterministic order.
pub fn mine_repositories(
    repos: &[PathBuf],
    filter: &KeywordFilter,
    opts: &MineOptions,
) -> Result<MineOutcome, MinerError> {
    let results: Vec<Result<MineOutcome, MinerError>> = repos
        .par_iter()
        .map(|r| mine_repository_with(r, filter, opts))
        .collect();
    let mut merged = MineOutcome::default();
    for r in results {
        let mut r = r?;
        merged.changes.append(&mut r.changes);
        merged.warnings.append(&mut r.warnings);
    }
    Ok(merged)
}

/// Every ref and the object it points at, one per line. Two calls return the
/// same text iff no ref moved, which is what mining depends on.
pub fn repository_fingerprint(repo: &Path) -> Result<String, MinerError> {
    let git = Git::open(repo)?;
    let raw = git.run(&["for-each-ref", "--format=%(objectname) %(refname)"])?;
    Ok(String::from_utf8_lossy(&raw).into_owned())
}

/// Resolves `--repos`: a repository itself, a directory whose immediate
/// children are repositories, or a text file listing one path per line.
pub fn discover_repositories(target: &Path) -> Result<Vec<PathBuf>, MinerError> {
    let io_err = |source| MinerError::Io {
        path: target.to_path_buf(),
        source,
    };
    if target.is_file() {
        let text = fs::read_to_string(target).map_err(io_err)?;
        let base = target.parent().unwrap_or(Path::new("."));
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect());
    }
    if is_repository(target) {
        return Ok(vec![target.to_path_buf()]);
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(target).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() && is_repository(&path) {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(MinerError::NotARepository(target.to_path_buf()));
    }
    Ok(found)
}

fn is_repository(path: &Path) -> bool {
    path.join(".git").exists() || (path.join("HEAD").is_file() && path.join("objects").is_dir())
}

fn repo_name(path: &Path) -> String {
    let canon = path.canonicalize().unwrap_or_else(|_| path.to_path_buf());
    canon
        .file_name()
        .map(|n| n.to_string_lossy().trim_end_matches(".git").to_string())
        .unwrap_or_else(|| "repo".to_string())
}

fn commit_message(raw: &[u8]) -> Result<String, MinerError> {
    let text = String::from_utf8_lossy(raw);
    let body = match text.find("\n\n") {
        Some(i) => &text[i + 2..],
        None => "",
    };
    Ok(body.trim_end_matches('\n').to_string())
}

// ---------------------------------------------------------------------------
// Line diff

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    Equal,
    Delete,
    Insert,
}

/// Above this many DP cells the middle of the diff is treated as fully
/// replaced instead of running the quadratic LCS.
const MAX_LCS_CELLS: usize = 64_000_000;

/// Line-level LCS edit script from `old` to `new`. Lines keep their
/// terminators, so a missing final newline counts as a change.
pub fn diff_lines(old: &str, new: &str) -> Vec<DiffOp> {
    let a: Vec<&str> = old.split_inclusive('\n').collect();
    let b: Vec<&str> = new.split_inclusive('\n').collect();
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let am = &a[prefix..a.len() - suffix];
    let bm = &b[prefix..b.len() - suffix];

    let mut ops = vec![DiffOp::Equal; prefix];
    let (n, m) = (am.len(), bm.len());
    if n.saturating_mul(m) > MAX_LCS_CELLS {
        ops.extend(std::iter::repeat_n(DiffOp::Delete, n));
        ops.extend(std::iter::repeat_n(DiffOp::Insert, m));
    } else {
        // lcs[i][j] = LCS length of am[i..] and bm[j..]
        let w = m + 1;
        let mut lcs = vec![0u32; (n + 1) * w];
        for i in (0..n).rev() {
            for j in (0..m).rev() {
                lcs[i * w + j] = if am[i] == bm[j] {
                    lcs[(i + 1) * w + j + 1] + 1
                } else {
                    lcs[(i + 1) * w + j].max(lcs[i * w + j + 1])
                };
            }
        }
        let (mut i, mut j) = (0, 0);
        while i < n || j < m {
            if i < n && j < m && am[i] == bm[j] {
                ops.push(DiffOp::Equal);
                i += 1;
                j += 1;
            } else if j == m || (i < n && lcs[(i + 1) * w + j] >= lcs[i * w + j + 1]) {
                ops.push(DiffOp::Delete);
                i += 1;
            } else {
                ops.push(DiffOp::Insert);
                j += 1;
            }
        }
    }
    ops.extend(std::iter::repeat_n(DiffOp::Equal, suffix));
    ops
}

/// Parent-side lines a fix touched. Deleted or replaced lines are taken
/// directly; a pure insertion marks the parent line just before the insertion
/// point, clamped to `[1, line_count]`.
pub fn changed_parent_lines(old: &str, new: &str) -> Vec<usize> {
    let old_count = old.split_inclusive('\n').count();
    if old_count == 0 {
        return Vec::new();
    }
    let ops = diff_lines(old, new);
    let mut lines = Vec::new();
    let mut old_pos = 0usize; // old lines consumed so far
    let mut k = 0;
    while k < ops.len() {
        if ops[k] == DiffOp::Equal {
            old_pos += 1;
            k += 1;
            continue;
        }
        let hunk_start = old_pos;
        let mut deleted = false;
        while k < ops.len() && ops[k] != DiffOp::Equal {
            if ops[k] == DiffOp::Delete {
                old_pos += 1;
                lines.push(old_pos);
                deleted = true;
            }
            k += 1;
        }
        if !deleted {
            lines.push(hunk_start.clamp(1, old_count));
        }
    }
    lines.sort_unstable();
    lines.dedup();
    lines
}

// ---------------------------------------------------------------------------
// git plumbing

struct CommitInfo {
    id: String,
    parents: Vec<String>,
    time: i64,
}

struct TreeEntry {
    old_blob: String,
    new_blob: String,
    status: char,
    path: String,
}

struct Git {
    repo: PathBuf,
}

impl Git {
    fn open(repo: &Path) -> Result<Self, MinerError> {
        let git = Git {
            repo: repo.to_path_buf(),
        };
        if !repo.is_dir() || git.run(&["rev-parse", "--git-dir"]).is_err() {
            return Err(MinerError::NotARepository(repo.to_path_buf()));
        }
        Ok(git)
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        // Never fall through to an enclosing repository.
        if let Some(parent) = self
            .repo
            .canonicalize()
            .ok()
            .and_then(|p| p.parent().map(Path::to_path_buf))
        {
            cmd.env("GIT_CEILING_DIRECTORIES", parent);
        }
        cmd.arg("-C")
            .arg(&self.repo)
            .args(["-c", "core.quotepath=off"])
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env_remove("GIT_DIR")
            .env_remove("GIT_WORK_TREE");
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>, MinerError> {
        let output = self
            .command()
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|source| MinerError::Io {
                path: self.repo.clone(),
                source,
            })?;
        if !output.status.success() {
            return Err(MinerError::Git {
                repo: self.repo.clone(),
                command: args.first().copied().unwrap_or_default().to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(output.stdout)
    }

    fn commits(&self) -> Result<Vec<CommitInfo>, MinerError> {
        // An empty repository has no refs; rev-list --all prints nothing.
        let raw = self.run(&["rev-list", "--all", "--parents", "--timestamp"])?;
        let text = String::from_utf8_lossy(&raw);
        let mut seen = HashSet::new();
        let mut commits = Vec::new();
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            let (Some(ts), Some(id)) = (parts.next(), parts.next()) else {
                continue;
            };
            if !seen.insert(id.to_string()) {
                continue;
            }
            commits.push(CommitInfo {
                id: id.to_string(),
                parents: parts.map(str::to_string).collect(),
                time: ts.parse().unwrap_or(0),
            });
        }
        Ok(commits)
    }

    fn diff_tree(&self, parent: &str, commit: &str) -> Result<Vec<TreeEntry>, MinerError> {
        let raw = self.run(&[
            "diff-tree",
            "-r",
            "-z",
            "--no-renames",
            "--no-commit-id",
            parent,
            commit,
        ])?;
        let mut fields = raw.split(|&b| b == 0).filter(|f| !f.is_empty());
        let mut entries = Vec::new();
        while let Some(meta) = fields.next() {
            let meta = String::from_utf8_lossy(meta);
            let Some(path) = fields.next() else { break };
            let parts: Vec<&str> = meta.trim_start_matches(':').split(' ').collect();
            if parts.len() < 5 {
                return Err(MinerError::Git {
                    repo: self.repo.clone(),
                    command: "diff-tree".into(),
                    stderr: format!("unexpected record {meta:?}"),
                });
            }
            entries.push(TreeEntry {
                old_blob: parts[2].to_string(),
                new_blob: parts[3].to_string(),
                status: parts[4].chars().next().unwrap_or('?'),
                path: String::from_utf8_lossy(path).into_owned(),
            });
        }
        Ok(entries)
    }

    fn cat_file(&self) -> Result<CatFile, MinerError> {
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| MinerError::Io {
                path: self.repo.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(CatFile {
            repo: self.repo.clone(),
            child,
            stdin: Some(stdin),
            stdout,
        })
    }
}

/// A long-running `git cat-file --batch` process.
struct CatFile {
    repo: PathBuf,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl CatFile {
    fn read(&mut self, id: &str) -> Result<Vec<u8>, MinerError> {
        let err = |reason: String| MinerError::Object {
            repo: self.repo.clone(),
            id: id.to_string(),
            reason,
        };
        let stdin = self.stdin.as_mut().ok_or_else(|| err("cat-file closed".into()))?;
        writeln!(stdin, "{id}")
            .and_then(|_| stdin.flush())
            .map_err(|e| err(e.to_string()))?;
        let mut header = String::new();
        self.stdout.read_line(&mut header).map_err(|e| err(e.to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(err(format!("unexpected header {:?}", header.trim())));
        }
        let size: usize = parts[2]
            .parse()
            .map_err(|_| err(format!("bad size in {:?}", header.trim())))?;
        let mut body = vec![0u8; size + 1];
        self.stdout.read_exact(&mut body).map_err(|e| err(e.to_string()))?;
        body.pop();
        Ok(body)
    }

    fn close(mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

impl Drop for CatFile {
    fn drop(&mut self) {
        if self.stdin.take().is_some() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}
