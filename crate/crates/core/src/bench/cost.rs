//! Economic cost model and its cross-check against ledger accounting.

use serde::Serialize;

use crate::binding::Tel;
use crate::ledger::{MicroAlgo, TxKind, MIN_FEE};
use crate::registry::{Mode, Registry, RegistryError, SubscriberKeys, SystemConfig, WALLET_MIN_BALANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CostParams {
    pub fee: MicroAlgo,
    pub funding_per_subscriber: MicroAlgo,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            fee: MIN_FEE,
            funding_per_subscriber: WALLET_MIN_BALANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub funding_fees: MicroAlgo,
    pub min_balance_funding: MicroAlgo,
    pub out_distribution_fees: MicroAlgo,
    /// Fees C pays for its side of each swap; C is kept funded by the attestator.
    pub swap_fees_c: MicroAlgo,
    pub swap_fees_subscriber: MicroAlgo,
    pub opt_in_fees_subscriber: MicroAlgo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub attestator_total: MicroAlgo,
    pub breakdown: CostBreakdown,
    pub mode: String,
    pub n_subscribers: u64,
    pub n_switches: u64,
    /// What one subscriber pays to opt in to both tokens and switch once.
    pub per_subscriber_subscriber_cost: MicroAlgo,
    pub subscriber_total: MicroAlgo,
}

impl CostReport {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("cost report serializes")
    }
}

/// Pure arithmetic. Per subscriber the attestator pays the wallet's min
/// balance, the funding fee and the OUT transfer fee; both modes provision a
/// single wallet per number, so the mode only labels the report.
pub fn cost_report(n_subscribers: u64, n_switches: u64, mode: Mode, p: &CostParams) -> CostReport {
    let b = CostBreakdown {
        funding_fees: p.fee * n_subscribers,
        min_balance_funding: p.funding_per_subscriber * n_subscribers,
        out_distribution_fees: p.fee * n_subscribers,
        swap_fees_c: p.fee * n_switches,
        swap_fees_subscriber: p.fee * n_switches,
        opt_in_fees_subscriber: p.fee * (2 * n_subscribers),
    };
    CostReport {
        attestator_total: b.min_balance_funding + b.funding_fees + b.out_distribution_fees + b.swap_fees_c,
        breakdown: b,
        mode: mode.to_string(),
        n_subscribers,
        n_switches,
        per_subscriber_subscriber_cost: p.fee * 3,
        subscriber_total: b.opt_in_fees_subscriber + b.swap_fees_subscriber,
    }
}

/// Runs `n` enrollments and `switches` switches (round robin) on a fresh
/// ledger, then itemizes what the chain recorded after initialisation.
/// The per-subscriber figure includes a switch only when one happened.
pub fn measured_costs(
    n: u64,
    switches: u64,
    mode: Mode,
    seed: u64,
) -> Result<CostReport, RegistryError> {
    let mut cfg = SystemConfig::for_subscribers(n.max(1), mode).with_seed(seed);
    // refills would move Algos into C without being a protocol cost
    cfg.auto_refill = false;
    cfg.c_float = MIN_FEE * (switches + 10);
    let mut reg = Registry::init(cfg)?;
    let setup_height = reg.ledger().height();
    let mut rng = super::workload_rng(seed, 5);
    let mut subs = Vec::new();
    for i in 0..n {
        let tel = Tel::parse(&format!("+1555{i:07}")).expect("valid tel");
        let k = SubscriberKeys::generate(&mut rng);
        reg.enroll(&tel, &k)?;
        subs.push((tel, k));
    }
    reg.seal()?;
    for s in 0..switches {
        let (tel, k) = &subs[(s % n.max(1)) as usize];
        reg.switch_option(tel, &k.sign)?;
    }
    reg.seal()?;

    let info = *reg.info();
    let mut b = CostBreakdown::default();
    let mut wallets = std::collections::HashSet::new();
    for (_, e) in reg.cache().iter() {
        wallets.insert(e.wallet());
    }
    for block in reg.ledger().blocks().skip(setup_height as usize + 1) {
        for t in block.groups.iter().flat_map(|g| &g.txns) {
            if t.sender == info.attestator {
                match t.kind {
                    TxKind::Payment => {
                        b.funding_fees = b.funding_fees + t.fee;
                        b.min_balance_funding = b.min_balance_funding + MicroAlgo(t.amount);
                    }
                    TxKind::AssetTransfer => {
                        b.out_distribution_fees = b.out_distribution_fees + t.fee
                    }
                    _ => {}
                }
            } else if t.sender == info.c_address {
                b.swap_fees_c = b.swap_fees_c + t.fee;
            } else if wallets.contains(&t.sender) {
                match t.kind {
                    TxKind::AssetOptIn => {
                        b.opt_in_fees_subscriber = b.opt_in_fees_subscriber + t.fee
                    }
                    TxKind::AssetTransfer => {
                        b.swap_fees_subscriber = b.swap_fees_subscriber + t.fee
                    }
                    _ => {}
                }
            }
        }
    }
    let per_sub = if n == 0 {
        MicroAlgo::ZERO
    } else {
        // opt-ins per subscriber plus the observed fee of one switch
        let opt = b.opt_in_fees_subscriber.0 / n;
        let swap = b.swap_fees_subscriber.0.checked_div(switches).unwrap_or(0);
        MicroAlgo(opt + swap)
    };
    Ok(CostReport {
        attestator_total: b.min_balance_funding + b.funding_fees + b.out_distribution_fees + b.swap_fees_c,
        breakdown: b,
        mode: mode.to_string(),
        n_subscribers: n,
        n_switches: switches,
        per_subscriber_subscriber_cost: per_sub,
        subscriber_total: b.opt_in_fees_subscriber + b.swap_fees_subscriber,
    })
}
