#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

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
