#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Runs git in `dir` with a fixed identity and clock so commit ids are
/// reproducible.
pub fn git(dir: &Path, args: &[&str], when: i64) {
    let date = format!("{when} +0000");
    let out = Command::new("git")
        .args(args)
        .current_dir(dir)
        .env("GIT_AUTHOR_NAME", "Fixture")
        .env("GIT_AUTHOR_EMAIL", "fixture@example.com")
        .env("GIT_COMMITTER_NAME", "Fixture")
        .env("GIT_COMMITTER_EMAIL", "fixture@example.com")
        .env("GIT_AUTHOR_DATE", &date)
        .env("GIT_COMMITTER_DATE", &date)
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .output()
        .expect("git is installed");
    assert!(
        out.status.success(),
        "git {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn init_repo(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    git(dir, &["init", "-q", "-b", "main"], 0);
}

/// Writes `files`, stages everything and commits with `message` at `when`.
pub fn commit(dir: &Path, files: &[(&str, &str)], message: &str, when: i64) {
    for (path, body) in files {
        let p = dir.join(path);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        std::fs::write(p, body).unwrap();
    }
    git(dir, &["add", "-A"], when);
    git(dir, &["commit", "-q", "-m", message], when);
}

pub const APP_V1: &str = "\
import sqlite3

def find(conn, uid):
    q = \"SELECT * FROM users WHERE id=\" + uid
    return conn.execute(q)

def count(conn):
    return conn.execute(\"SELECT COUNT(*) FROM users\")
";

pub const APP_V2: &str = "\
import sqlite3

def find(conn, uid):
    q = \"SELECT * FROM users WHERE id=?\"
    return conn.execute(q, (uid,))

def count(conn):
    return conn.execute(\"SELECT COUNT(*) FROM users\")
";

pub const APP_V3: &str = "\
import sqlite3

def find(conn, uid):
    q = \"SELECT * FROM users WHERE id=?\"
    return conn.execute(q, (uid,))

def count(conn):
    # total number of users
    return conn.execute(\"SELECT COUNT(*) FROM users\")
";

/// The three-commit fixture: init, the fix (lines 4-5), a comment-only typo
/// commit.
pub fn three_commit_repo(dir: &Path) {
    init_repo(dir);
    commit(
        dir,
        &[("app.py", APP_V1), ("README.md", "demo\n")],
        "init",
        1_600_000_000,
    );
    commit(dir, &[("app.py", APP_V2)], "SQL injection fixed", 1_600_000_100);
    commit(dir, &[("app.py", APP_V3)], "typo", 1_600_000_200);
}

// ---------------------------------------------------------------------------
// synthetic corpus

const FUNCS: &[&str] = &[
    "load",
    "fetch",
    "lookup",
    "find_user",
    "get_order",
    "search",
    "report",
    "export",
];
const ARGS: &[&str] = &["uid", "name", "email", "term", "order_id", "key"];
const CONNS: &[&str] = &["conn", "db", "connection"];
const CURS: &[&str] = &["cur", "cursor", "c"];
const TABLES: &[&str] = &["users", "orders", "items", "accounts", "logs"];
const COLS: &[&str] = &["id", "name", "email", "total", "status"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

/// One function of `lines`; `vulnerable` marks (0-based) lines to be labeled.
struct Block {
    lines: Vec<String>,
    vulnerable: Vec<usize>,
    fixed: Vec<String>,
}

fn sql_block(rng: &mut ChaCha8Rng, vulnerable: bool) -> Block {
    let f = pick(rng, FUNCS);
    let conn = pick(rng, CONNS);
    let cur = pick(rng, CURS);
    let arg = pick(rng, ARGS);
    let tbl = pick(rng, TABLES);
    let col = pick(rng, COLS);
    let col2 = pick(rng, COLS);
    let head = vec![
        format!("def {f}({conn}, {arg}):"),
        format!("    {cur} = {conn}.cursor()"),
    ];
    let tail = format!("    return {cur}.fetchall()");
    let safe = format!("    {cur}.execute(\"SELECT {col} FROM {tbl} WHERE {col2} = ?\", ({arg},))");
    let mut lines = head.clone();
    let mut fixed = head;
    let mut vul = Vec::new();
    if vulnerable {
        let bad = match rng.gen_range(0..3) {
            0 => format!("    {cur}.execute(\"SELECT {col} FROM {tbl} WHERE {col2} = '\" + {arg} + \"'\")"),
            1 => format!("    {cur}.execute(\"SELECT {col} FROM {tbl} WHERE {col2} = \" + str({arg}))"),
            _ => format!("    {cur}.execute(\"DELETE FROM {tbl} WHERE {col2} = '\" + {arg} + \"'\")"),
        };
        vul.push(lines.len());
        lines.push(bad);
    } else {
        lines.push(safe.clone());
    }
    fixed.push(safe);
    lines.push(tail.clone());
    fixed.push(tail);
    Block {
        lines,
        vulnerable: vul,
        fixed,
    }
}

fn filler_block(rng: &mut ChaCha8Rng) -> Block {
    let f = pick(rng, FUNCS);
    let arg = pick(rng, ARGS);
    let lines: Vec<String> = match rng.gen_range(0..4) {
        0 => vec![
            format!("def greet_{f}({arg}):"),
            format!("    msg = \"Hello, \" + {arg} + \"!\""),
            "    print(msg)".into(),
            "    return msg".into(),
        ],
        1 => vec![
            format!("def total_{f}(values, {arg}):"),
            "    acc = 0".into(),
            "    for v in values:".into(),
            format!("        acc += v * {arg}"),
            "    return acc".into(),
        ],
        2 => vec![
            format!("def log_{f}(logger, {arg}):"),
            format!("    logger.info(\"handling %s\", {arg})"),
            "    return None".into(),
        ],
        _ => vec![
            format!("def check_{f}({arg}):"),
            format!("    if not {arg}:"),
            "        raise ValueError(\"missing value\")".into(),
            format!("    return len({arg}) > 3"),
        ],
    };
    Block {
        fixed: lines.clone(),
        lines,
        vulnerable: Vec::new(),
    }
}

/// A synthetic Python module before and after its fix, with the 1-based
/// lines the fix touched. Every module holds exactly one injectable
/// `execute` call among safe SQL and ordinary helper functions.
pub struct SynthFile {
    pub before: String,
    pub after: String,
    pub changed_lines: Vec<usize>,
}

pub fn synth_file(rng: &mut ChaCha8Rng) -> SynthFile {
    let n = rng.gen_range(3..6);
    let bad = rng.gen_range(0..n);
    let mut blocks = Vec::new();
    for i in 0..n {
        blocks.push(if i == bad {
            sql_block(rng, true)
        } else if rng.gen_bool(0.4) {
            sql_block(rng, false)
        } else {
            filler_block(rng)
        });
    }
    let mut before = vec!["import sqlite3".to_string()];
    let mut after = before.clone();
    let mut changed = Vec::new();
    for b in blocks {
        before.push(String::new());
        after.push(String::new());
        for v in &b.vulnerable {
            changed.push(before.len() + v + 1);
        }
        before.extend(b.lines);
        after.extend(b.fixed);
    }
    SynthFile {
        before: before.join("\n") + "\n",
        after: after.join("\n") + "\n",
        changed_lines: changed,
    }
}

/// `repos` git repositories under `root`, each with `files` modules
/// committed vulnerable and then fixed one commit per file.
pub fn synth_repos(root: &Path, repos: usize, files: usize, rng: &mut ChaCha8Rng) {
    let mut when = 1_650_000_000;
    for r in 0..repos {
        let dir = root.join(format!("repo{r}"));
        init_repo(&dir);
        let synth: Vec<SynthFile> = (0..files).map(|_| synth_file(rng)).collect();
        let names: Vec<String> = (0..files).map(|i| format!("app/mod{i}.py")).collect();
        let initial: Vec<(&str, &str)> = names
            .iter()
            .map(String::as_str)
            .zip(synth.iter().map(|s| s.before.as_str()))
            .collect();
        commit(&dir, &initial, "initial import", when);
        when += 60;
        for (name, s) in names.iter().zip(&synth) {
            commit(&dir, &[(name, &s.after)], &format!("Fix SQL injection in {name}"), when);
            when += 60;
        }
    }
}
