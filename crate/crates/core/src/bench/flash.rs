//! Flash-crowd enrollment throughput.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::binding::Tel;
use crate::registry::{Mode, Registry, RegistryError, SubscriberKeys, SystemConfig};

use super::stats::{summarize, Summary};

pub const DAY_SECS: u64 = 86_400;
/// Arrival windows of the two-peak day, in simulated seconds after midnight.
pub const PEAK_WINDOWS: [(u64, u64); 2] = [(2 * 3600, 4 * 3600), (11 * 3600, 13 * 3600)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalPattern {
    /// Everyone arrives at once.
    Batch,
    /// Uniform arrivals in two daily windows.
    TwoPeak,
}

impl std::str::FromStr for ArrivalPattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "batch" => Ok(ArrivalPattern::Batch),
            "twopeak" | "two-peak" => Ok(ArrivalPattern::TwoPeak),
            other => Err(format!("unknown arrival pattern {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlashCrowdScenario {
    pub n_subscribers: u64,
    pub pattern: ArrivalPattern,
    pub mode: Mode,
    pub seed: u64,
}

impl FlashCrowdScenario {
    pub fn new(n_subscribers: u64, pattern: ArrivalPattern) -> Self {
        FlashCrowdScenario {
            n_subscribers,
            pattern,
            mode: Mode::Direct,
            seed: 0,
        }
    }

    /// Sorted arrival times in simulated seconds after midnight.
    pub fn arrivals(&self) -> Vec<u64> {
        let mut rng = super::workload_rng(self.seed, 2);
        let mut out: Vec<u64> = (0..self.n_subscribers)
            .map(|_| match self.pattern {
                ArrivalPattern::Batch => 0,
                ArrivalPattern::TwoPeak => {
                    let (lo, hi) = PEAK_WINDOWS[rng.gen_range(0..2)];
                    rng.gen_range(lo..hi)
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Arrivals per simulated hour, 24 bins.
pub fn hourly_histogram(arrivals: &[u64]) -> Vec<(u64, u64)> {
    let mut bins = [0u64; 24];
    for a in arrivals {
        bins[((a % DAY_SECS) / 3600) as usize] += 1;
    }
    bins.iter().enumerate().map(|(h, c)| (h as u64, *c)).collect()
}

/// Share of arrivals that fall inside the two peak windows.
pub fn share_in_peaks(arrivals: &[u64]) -> f64 {
    if arrivals.is_empty() {
        return 0.0;
    }
    let inside = arrivals
        .iter()
        .filter(|a| PEAK_WINDOWS.iter().any(|(lo, hi)| (lo..hi).contains(a)))
        .count();
    inside as f64 / arrivals.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct ThroughputReport {
    /// Set when an enrollment failed; metrics cover the ones before it.
    pub aborted: Option<String>,
    pub blocks_sealed: u64,
    pub completed: u64,
    pub enroll_secs: Summary,
    pub invariants_ok: bool,
    pub keygen_secs: Summary,
    pub n_subscribers: u64,
    pub pattern: ArrivalPattern,
    /// Clock advance, key generation and enrollment of one subscriber.
    pub per_enrollment_secs: Summary,
    /// Sustained rate, the inverse of the mean per-enrollment time.
    pub rate_per_sec: f64,
    pub seal_secs: f64,
    pub total_secs: f64,
}

impl ThroughputReport {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn config_for(s: &FlashCrowdScenario) -> SystemConfig {
    SystemConfig::for_subscribers(s.n_subscribers.max(1), s.mode).with_seed(s.seed)
}

/// Enrolls the crowd on a fresh system. Returns the report and the system
/// for further inspection.
pub fn run_flash_crowd(s: &FlashCrowdScenario) -> Result<(ThroughputReport, Registry), RegistryError> {
    let mut reg = Registry::init(config_for(s))?;
    let report = enroll_crowd(&mut reg, s);
    Ok((report, reg))
}

pub fn enroll_crowd(reg: &mut Registry, s: &FlashCrowdScenario) -> ThroughputReport {
    let arrivals = s.arrivals();
    let mut rng = super::workload_rng(s.seed, 3);
    let day0 = reg.now();
    let start_height = reg.ledger().height();
    let mut keygen = Vec::with_capacity(arrivals.len());
    let mut enroll = Vec::with_capacity(arrivals.len());
    let mut whole = Vec::with_capacity(arrivals.len());
    let mut seal_time = Duration::ZERO;
    let mut aborted = None;
    let started = Instant::now();
    for (i, at) in arrivals.iter().enumerate() {
        let t0 = Instant::now();
        if let Err(e) = reg.ledger_mut().advance_to(day0 + at) {
            aborted = Some(e.to_string());
            break;
        }
        seal_time += t0.elapsed();

        let t1 = Instant::now();
        let keys = SubscriberKeys::generate(&mut rng);
        keygen.push(t1.elapsed().as_secs_f64());

        let tel = Tel::parse(&format!("+3906{i:08}")).expect("valid tel");
        let t2 = Instant::now();
        if let Err(e) = reg.enroll(&tel, &keys) {
            aborted = Some(e.to_string());
            break;
        }
        enroll.push(t2.elapsed().as_secs_f64());
        whole.push(t0.elapsed().as_secs_f64());
    }
    let t3 = Instant::now();
    let sealed = reg.seal().is_ok();
    seal_time += t3.elapsed();
    let total = started.elapsed().as_secs_f64();
    let completed = enroll.len() as u64;
    let per = summarize(&whole);
    ThroughputReport {
        aborted,
        blocks_sealed: reg.ledger().height() - start_height,
        completed,
        enroll_secs: summarize(&enroll),
        invariants_ok: sealed && reg.check_invariants().is_ok(),
        keygen_secs: summarize(&keygen),
        n_subscribers: s.n_subscribers,
        pattern: s.pattern,
        per_enrollment_secs: per,
        rate_per_sec: if per.mean > 0.0 { 1.0 / per.mean } else { 0.0 },
        seal_secs: seal_time.as_secs_f64(),
        total_secs: total,
    }
}
