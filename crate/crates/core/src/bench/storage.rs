//! Block-log growth against the number of subscribers.

use std::path::Path;

use serde::Serialize;

use crate::binding::Tel;
use crate::registry::{Mode, Registry, RegistryError, SubscriberKeys, SystemConfig};

use super::stats::{linear_fit, LinearFit};

/// The published estimate for 100M subscribers on Algorand, in GB. Kept only
/// for side-by-side display.
pub const PAPER_REFERENCE_GB_100M: f64 = 1650.0;

/// Enrollments sealed into each block while sampling.
pub const ENROLLMENTS_PER_BLOCK: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StorageSample {
    pub bytes: u64,
    pub n_subscribers: u64,
}

impl StorageSample {
    pub fn bytes_per_subscriber(&self) -> f64 {
        self.bytes as f64 / self.n_subscribers.max(1) as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StorageReport {
    pub fit: Option<LinearFit>,
    /// Block-log growth per sealed empty block.
    pub idle_bytes_per_block: f64,
    pub samples: Vec<StorageSample>,
}

impl StorageReport {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Fitted bytes for `n` subscribers: slope × n + intercept.
    pub fn extrapolate(&self, n: u64) -> Option<f64> {
        self.fit.map(|f| f.predict(n as f64))
    }

    /// Largest relative deviation of bytes per subscriber from their mean.
    pub fn per_subscriber_spread(&self) -> f64 {
        let per: Vec<f64> = self.samples.iter().map(|s| s.bytes_per_subscriber()).collect();
        if per.is_empty() {
            return 0.0;
        }
        let mean = per.iter().sum::<f64>() / per.len() as f64;
        per.iter()
            .map(|p| (p - mean).abs() / mean)
            .fold(0.0, f64::max)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|s| (s.n_subscribers as f64, s.bytes as f64))
            .collect()
    }
}

/// Block-log bytes after enrolling `n` subscribers on a fresh persistent
/// system in `dir`, which must be absent or empty.
pub fn measure_storage(dir: &Path, n: u64, mode: Mode, seed: u64) -> Result<u64, RegistryError> {
    let mut cfg = SystemConfig::for_subscribers(n.max(1), mode).with_seed(seed);
    cfg.empty_blocks = false;
    let mut reg = Registry::init_in_dir(dir, cfg)?;
    let mut rng = super::workload_rng(seed, 4);
    for i in 0..n {
        let tel = Tel::parse(&format!("+3904{i:08}")).expect("valid tel");
        reg.enroll(&tel, &SubscriberKeys::generate(&mut rng))?;
        if (i + 1) % ENROLLMENTS_PER_BLOCK == 0 {
            reg.seal()?;
        }
    }
    if !reg.ledger().pending_groups().is_empty() {
        reg.seal()?;
    }
    let log = reg.ledger().log().expect("persistent system has a log");
    let on_disk = std::fs::metadata(log.path()).map_err(RegistryError::io)?.len();
    Ok(on_disk)
}

/// Growth of the log over `blocks` empty blocks on an idle system.
pub fn idle_growth(dir: &Path, blocks: u64, mode: Mode, seed: u64) -> Result<u64, RegistryError> {
    let cfg = SystemConfig::for_subscribers(1, mode).with_seed(seed);
    let mut reg = Registry::init_in_dir(dir, cfg)?;
    let before = reg.ledger().log().expect("log").bytes_written();
    reg.advance_blocks(blocks)?;
    Ok(reg.ledger().log().expect("log").bytes_written() - before)
}

/// One fresh system per sample point, each in its own subdirectory of
/// `work_dir`.
pub fn storage_report(
    work_dir: &Path,
    sample_points: &[u64],
    mode: Mode,
    seed: u64,
) -> Result<StorageReport, RegistryError> {
    let mut samples = Vec::new();
    for &n in sample_points {
        let dir = work_dir.join(format!("storage-{mode}-{n}"));
        let bytes = measure_storage(&dir, n, mode, seed)?;
        samples.push(StorageSample {
            bytes,
            n_subscribers: n,
        });
    }
    let idle_blocks = 1000;
    let idle = idle_growth(&work_dir.join(format!("storage-idle-{mode}")), idle_blocks, mode, seed)?;
    let points: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (s.n_subscribers as f64, s.bytes as f64))
        .collect();
    Ok(StorageReport {
        fit: linear_fit(&points),
        idle_bytes_per_block: idle as f64 / idle_blocks as f64,
        samples,
    })
}
