//! Desk-scale reproductions of the evaluation: flash-crowd enrollment,
//! pruning latency, storage growth and the economic cost model.
//!
//! Ledger contents are seed-deterministic; only timings vary between runs.

pub mod cost;
pub mod flash;
pub mod pruning;
pub mod stats;
pub mod storage;

pub use cost::{cost_report, measured_costs, CostBreakdown, CostParams, CostReport};
pub use flash::{
    enroll_crowd, hourly_histogram, run_flash_crowd, share_in_peaks, ArrivalPattern,
    FlashCrowdScenario, ThroughputReport,
};
pub use pruning::{run_pruning_bench, PruneBenchReport, PrunePoint, SyntheticChain};
pub use stats::{linear_fit, summarize, write_tsv, LinearFit, Summary};
pub use storage::{storage_report, StorageReport, StorageSample, PAPER_REFERENCE_GB_100M};

/// Workload randomness, on a separate ChaCha stream from the registry's own
/// key generation so that the same seed never yields colliding keys.
pub(crate) fn workload_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
