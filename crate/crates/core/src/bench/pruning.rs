//! Cache versus chain-scan pruning latency.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::binding::Tel;
use crate::prune::{prune, PruneMode, PruneRequest};
use crate::registry::{Mode, Registry, RegistryError, SubscriberKeys, SystemConfig};

use super::stats::{linear_fit, summarize, LinearFit};

pub fn subscriber_tel(i: u64) -> String {
    format!("+3902{i:08}")
}

/// Numbers never enrolled by [`grow_chain`].
pub fn outsider_tel(i: u64) -> String {
    format!("+3903{i:08}")
}

/// A system whose chain grows by enrolling numbered subscribers, a third
/// of whom switch to IN. One block is sealed per `per_block` enrollments.
pub struct SyntheticChain {
    pub registry: Registry,
    rng: ChaCha20Rng,
    pub enrolled: u64,
    pub per_block: u64,
}

impl SyntheticChain {
    pub fn new(capacity: u64, mode: Mode, seed: u64) -> Result<Self, RegistryError> {
        let mut cfg = SystemConfig::for_subscribers(capacity.max(1), mode).with_seed(seed);
        cfg.empty_blocks = false;
        Ok(SyntheticChain {
            registry: Registry::init(cfg)?,
            rng: super::workload_rng(seed, 1),
            enrolled: 0,
            per_block: 50,
        })
    }

    pub fn grow_to(&mut self, n: u64) -> Result<(), RegistryError> {
        while self.enrolled < n {
            let i = self.enrolled;
            let tel = Tel::parse(&subscriber_tel(i)).expect("valid tel");
            let keys = SubscriberKeys::generate(&mut self.rng);
            self.registry.enroll(&tel, &keys)?;
            if self.rng.gen_ratio(1, 3) {
                self.registry.switch_option(&tel, &keys.sign)?;
            }
            self.enrolled += 1;
            if self.enrolled % self.per_block == 0 {
                self.registry.seal()?;
            }
        }
        if !self.registry.ledger().pending_groups().is_empty() {
            self.registry.seal()?;
        }
        Ok(())
    }

    /// Half enrolled numbers, half outsiders, shuffled. Outsiders keep the
    /// chain scan from stopping early.
    pub fn request(&mut self, m: u64) -> Vec<String> {
        let mut nums: Vec<String> = (0..m)
            .map(|j| {
                if j % 2 == 0 && self.enrolled > 0 {
                    subscriber_tel(self.rng.gen_range(0..self.enrolled))
                } else {
                    outsider_tel(j)
                }
            })
            .collect();
        nums.shuffle(&mut self.rng);
        nums
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PrunePoint {
    pub binding_notes: u64,
    pub blocks: u64,
    pub cache_mean_secs: f64,
    pub chain_mean_secs: f64,
    pub list_size: u64,
    /// Chain over cache; `None` when the list is empty or cache time is zero.
    pub ratio: Option<f64>,
    pub runs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PruneBenchReport {
    /// Chain-scan mean time against notes × list size.
    pub chain_fit: Option<LinearFit>,
    pub points: Vec<PrunePoint>,
}

impl PruneBenchReport {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// `(notes × list size, chain-scan mean seconds)` for plotting.
    pub fn chain_points(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.list_size > 0)
            .map(|p| ((p.binding_notes * p.list_size) as f64, p.chain_mean_secs))
            .collect()
    }
}

/// Times both prune modes `runs` times on one request.
pub fn measure(registry: &Registry, numbers: &[String], runs: usize) -> (f64, f64) {
    if numbers.is_empty() {
        return (0.0, 0.0);
    }
    let mut cache = Vec::with_capacity(runs);
    let mut chain = Vec::with_capacity(runs);
    for _ in 0..runs {
        for (mode, out) in [(PruneMode::Cache, &mut cache), (PruneMode::ChainScan, &mut chain)] {
            let req = PruneRequest::new(numbers.to_vec(), mode);
            let t = Instant::now();
            prune(registry, &req).expect("non-empty request of valid numbers");
            out.push(t.elapsed().as_secs_f64());
        }
    }
    (summarize(&cache).mean, summarize(&chain).mean)
}

/// For every chain size (grown incrementally on one system) and list size,
/// measures both modes `runs` times.
pub fn run_pruning_bench(
    list_sizes: &[u64],
    chain_sizes: &[u64],
    runs: usize,
    mode: Mode,
    seed: u64,
) -> Result<PruneBenchReport, RegistryError> {
    let mut sizes = chain_sizes.to_vec();
    sizes.sort_unstable();
    let mut chain = SyntheticChain::new(sizes.last().copied().unwrap_or(1), mode, seed)?;
    let mut points = Vec::new();
    for &b in &sizes {
        chain.grow_to(b)?;
        for &m in list_sizes {
            let nums = chain.request(m);
            let (cache_mean, chain_mean) = measure(&chain.registry, &nums, runs);
            let ratio = (m > 0 && cache_mean > 0.0).then(|| chain_mean / cache_mean);
            points.push(PrunePoint {
                binding_notes: chain.enrolled,
                blocks: chain.registry.ledger().height(),
                cache_mean_secs: cache_mean,
                chain_mean_secs: chain_mean,
                list_size: m,
                ratio,
                runs,
            });
        }
    }
    let mut report = PruneBenchReport {
        chain_fit: None,
        points,
    };
    report.chain_fit = linear_fit(&report.chain_points());
    Ok(report)
}
