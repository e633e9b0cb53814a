//! Library half of the `vulnhound` binary: configuration, stage functions,
//! scanning and the staged pipeline.

pub mod config;
pub mod ops;
pub mod pipeline;
pub mod scan;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

/// Marks an error as a bug rather than bad input; maps to exit code 3.
#[derive(Debug, thiserror::Error)]
#[error("internal error: {0}")]
pub struct Internal(pub String);

/// Exit code for a failed command: 3 if any cause is [`Internal`], else 2.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| c.is::<Internal>()) {
        exit::INTERNAL
    } else {
        exit::DATA
    }
}
