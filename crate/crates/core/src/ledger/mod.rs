//! Hash-chained blocks, the block store, and atomic-broadcast checkers.

mod block;
pub mod checks;

pub use block::{Block, BlockStore, Seed, StoredBlock};
pub use checks::{
    check_liveness, check_safety, latency_stats, InputEvent, LatencyStats, LivenessReport,
    LogEvent, SafetyReport, SafetyViolation,
};
