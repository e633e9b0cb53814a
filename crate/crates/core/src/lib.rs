//! Building blocks for learning to spot SQL injection in Python source:
//! a span-exact lexer, a fix-commit miner, a labeled window builder,
//! token embeddings, an LSTM classifier and evaluation helpers.

pub mod dataset;
pub mod embed;
pub mod evalkit;
pub mod features;
pub mod miner;
pub mod pylex;
pub mod rnn;
