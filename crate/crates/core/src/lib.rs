//! Deterministic simulator for consensus in the sleepy model.

pub mod adversary;
pub mod brute;
pub mod compiler;
pub mod config;
pub mod engine;
pub mod error;
pub mod harness;
pub mod ledger;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod protocol;
pub mod schedule;
pub mod trace;
pub mod types;
pub mod wakeness;

pub use error::{Error, LedgerError, NetError, OracleError, Result};
pub use types::*;
