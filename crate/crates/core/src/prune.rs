//! Operator-side pruning: drop opted-out numbers from a call list.
//!
//! Cache mode resolves numbers through the attestator's identity cache.
//! Chain-scan mode walks every sealed block, decrypting binding notes as the
//! attestator and matching each against the still unresolved numbers by
//! linear search. Both read options at the same sealed height.
//!
//! Numbers that were never enrolled have no option and are kept; only OUT
//! numbers are removed.

use std::collections::HashSet;
use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::binding::Tel;
use crate::ledger::{verify_holding, Address, HoldingProof, LedgerError};
use crate::registry::{scan_bindings, OptionState, Registry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PruneError {
    #[error("empty request")]
    EmptyRequest,
    #[error("line {line}: {raw:?} is not a telephone number")]
    InvalidTel { line: usize, raw: String },
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    Cache,
    #[serde(rename = "chain")]
    ChainScan,
}

impl fmt::Display for PruneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneMode::Cache => "cache",
            PruneMode::ChainScan => "chain",
        })
    }
}

impl std::str::FromStr for PruneMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cache" => Ok(PruneMode::Cache),
            "chain" => Ok(PruneMode::ChainScan),
            other => Err(format!("unknown prune mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PruneRequest {
    pub numbers: Vec<String>,
    pub mode: PruneMode,
    pub with_proofs: bool,
}

impl PruneRequest {
    pub fn new(numbers: Vec<String>, mode: PruneMode) -> Self {
        PruneRequest {
            numbers,
            mode,
            with_proofs: false,
        }
    }

    pub fn with_proofs(mut self) -> Self {
        self.with_proofs = true;
        self
    }

    /// One number per line; blank lines are skipped.
    pub fn from_lines(text: &str, mode: PruneMode) -> Self {
        let numbers = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(numbers, mode)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TelProof {
    pub proof: HoldingProof,
    pub tel: Tel,
}

impl TelProof {
    /// Canonical text record: compact JSON with sorted keys.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("proof serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PruneResult {
    pub block_height: u64,
    /// Blocks visited by a chain scan; zero in cache mode.
    pub blocks_scanned: u64,
    pub duplicates: usize,
    #[serde(skip)]
    pub elapsed: Duration,
    pub kept: Vec<Tel>,
    pub mode: PruneMode,
    pub notes_decrypted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proofs: Option<Vec<TelProof>>,
    pub removed: Vec<Tel>,
    pub removed_count: usize,
}

impl PruneResult {
    /// Canonical record of everything except the elapsed time.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("prune result serializes")
    }

    pub fn summary(&self) -> String {
        format!(
            "removed_count={}\tblock_height={}\telapsed_ms={:.3}\tblocks_scanned={}\tduplicates={}",
            self.removed_count,
            self.block_height,
            self.elapsed.as_secs_f64() * 1e3,
            self.blocks_scanned,
            self.duplicates
        )
    }

    /// Checks every proof against the state root of the result's block.
    pub fn verify_proofs(&self, registry: &Registry) -> Vec<bool> {
        let root = registry
            .ledger()
            .block(self.block_height)
            .map(|b| b.state_root);
        self.proofs
            .iter()
            .flatten()
            .map(|p| root.is_some_and(|r| verify_holding(&p.proof, &r)))
            .collect()
    }
}

/// Normalizes and deduplicates, keeping first occurrences in input order.
pub fn normalize_numbers(raw: &[String]) -> Result<(Vec<Tel>, usize), PruneError> {
    let mut seen = HashSet::with_capacity(raw.len());
    let mut out = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let tel = Tel::parse(r).map_err(|_| PruneError::InvalidTel {
            line: i + 1,
            raw: r.clone(),
        })?;
        if seen.insert(tel.clone()) {
            out.push(tel);
        }
    }
    let dups = raw.len() - out.len();
    Ok((out, dups))
}

pub fn prune(registry: &Registry, request: &PruneRequest) -> Result<PruneResult, PruneError> {
    if request.numbers.is_empty() {
        return Err(PruneError::EmptyRequest);
    }
    let start = Instant::now();
    let (tels, duplicates) = normalize_numbers(&request.numbers)?;
    let height = registry.ledger().height();

    let (wallets, blocks_scanned, notes_decrypted) = match request.mode {
        PruneMode::Cache => {
            let w: Vec<Option<Address>> = tels
                .iter()
                .map(|t| registry.cache().get(t).map(|e| e.wallet()))
                .collect();
            (w, 0, 0)
        }
        PruneMode::ChainScan => chain_resolve(registry, &tels),
    };

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut proofs = request.with_proofs.then(Vec::new);
    let info = registry.info();
    for (tel, wallet) in tels.into_iter().zip(wallets) {
        let option = wallet.map_or(OptionState::None, |w| registry.option_of_wallet(&w));
        if let (Some(ps), Some(w)) = (proofs.as_mut(), wallet) {
            let asset = match option {
                OptionState::In => Some(info.in_asset),
                OptionState::Out => Some(info.out_asset),
                OptionState::None => None,
            };
            if let Some(asset) = asset {
                let proof = registry.ledger().prove_holding(&w, asset, height)?;
                ps.push(TelProof {
                    proof,
                    tel: tel.clone(),
                });
            }
        }
        match option {
            OptionState::Out => removed.push(tel),
            OptionState::In | OptionState::None => kept.push(tel),
        }
    }
    Ok(PruneResult {
        block_height: height,
        blocks_scanned,
        duplicates,
        elapsed: start.elapsed(),
        kept,
        mode: request.mode,
        notes_decrypted,
        proofs,
        removed_count: removed.len(),
        removed,
    })
}

/// Resolves tels to wallets by scanning sealed blocks in order. Stops once
/// every number is resolved.
fn chain_resolve(registry: &Registry, tels: &[Tel]) -> (Vec<Option<Address>>, u64, usize) {
    let mut wallets = vec![None; tels.len()];
    // indices still unresolved; searched linearly for every decrypted note
    let mut open: Vec<usize> = (0..tels.len()).collect();
    let mut last_height = 0;
    let notes = scan_bindings(
        registry.ledger(),
        &registry.info().attestator,
        &registry.attestator().enc.secret,
        false,
        |b| {
            last_height = b.height;
            if let Some(pos) = open.iter().position(|&i| tels[i] == b.plain.tel) {
                wallets[open.swap_remove(pos)] = Some(b.wallet);
            }
            !open.is_empty()
        },
    );
    let height = registry.ledger().height();
    let scanned = if open.is_empty() { last_height } else { height };
    (wallets, scanned, notes)
}
