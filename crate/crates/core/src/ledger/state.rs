use std::collections::BTreeMap;

use super::tx::{Transaction, TxKind};
use super::types::{Address, AssetClass, AssetId, MicroAlgo};
use super::LedgerError;

pub const BASE_MIN_BALANCE: MicroAlgo = MicroAlgo(100_000);
pub const PER_ASSET_MIN_BALANCE: MicroAlgo = MicroAlgo(100_000);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountState {
    pub address: Address,
    pub balance: MicroAlgo,
    /// Keys are exactly the opted-in assets; a zero amount is a live opt-in.
    pub holdings: BTreeMap<AssetId, u64>,
    pub program: Option<Vec<u8>>,
}

impl AccountState {
    pub fn new(address: Address) -> Self {
        AccountState {
            address,
            balance: MicroAlgo::ZERO,
            holdings: BTreeMap::new(),
            program: None,
        }
    }

    pub fn is_opted_in(&self, asset: AssetId) -> bool {
        self.holdings.contains_key(&asset)
    }

    pub fn opted_in(&self) -> impl Iterator<Item = AssetId> + '_ {
        self.holdings.keys().copied()
    }

    pub fn holding(&self, asset: AssetId) -> u64 {
        self.holdings.get(&asset).copied().unwrap_or(0)
    }

    pub fn min_balance(&self) -> MicroAlgo {
        BASE_MIN_BALANCE + PER_ASSET_MIN_BALANCE * self.holdings.len() as u64
    }
}

#[derive(Clone, Debug, Default)]
pub struct WorldState {
    pub(crate) accounts: BTreeMap<Address, AccountState>,
    pub(crate) assets: BTreeMap<AssetId, AssetClass>,
    pub(crate) next_asset_id: u64,
    pub(crate) fees_collected: MicroAlgo,
    pub(crate) minted: MicroAlgo,
}

/// Effects of one group, computed against a base state without touching it.
#[derive(Debug, Default)]
pub(crate) struct Changes {
    pub accounts: BTreeMap<Address, AccountState>,
    pub new_assets: Vec<AssetClass>,
    pub fees: MicroAlgo,
}

impl WorldState {
    pub fn new() -> Self {
        WorldState {
            next_asset_id: 1,
            ..Default::default()
        }
    }

    pub fn account(&self, a: &Address) -> Option<&AccountState> {
        self.accounts.get(a)
    }

    pub fn asset(&self, id: AssetId) -> Option<&AssetClass> {
        self.assets.get(&id)
    }

    /// Runs the transactions in order against a private overlay. Nothing in
    /// `self` changes; the caller commits the returned [`Changes`].
    pub(crate) fn stage(&self, txns: &[Transaction]) -> Result<Changes, LedgerError> {
        let mut ov = Overlay {
            base: self,
            changes: Changes::default(),
            next_asset_id: self.next_asset_id,
        };
        for (i, t) in txns.iter().enumerate() {
            ov.apply(i, t)?;
        }
        for acct in ov.changes.accounts.values() {
            if acct.balance < acct.min_balance() {
                return Err(LedgerError::BelowMinBalance {
                    address: acct.address,
                    balance: acct.balance,
                    required: acct.min_balance(),
                });
            }
        }
        Ok(ov.changes)
    }

    /// Applies staged changes, returning the pre-images of replaced accounts.
    pub(crate) fn commit(&mut self, changes: Changes) -> Vec<(Address, Option<AccountState>)> {
        let mut pre = Vec::with_capacity(changes.accounts.len());
        for (addr, acct) in changes.accounts {
            let old = self.accounts.insert(addr, acct);
            pre.push((addr, old));
        }
        for asset in changes.new_assets {
            self.next_asset_id = self.next_asset_id.max(asset.asset_id.0 + 1);
            self.assets.insert(asset.asset_id, asset);
        }
        self.fees_collected = self.fees_collected + changes.fees;
        pre
    }

    pub fn total_balances(&self) -> MicroAlgo {
        self.accounts.values().map(|a| a.balance).sum()
    }

    #[cfg(test)]
    pub fn circulating(&self, asset: AssetId) -> u64 {
        self.accounts.values().map(|a| a.holding(asset)).sum()
    }
}

struct Overlay<'a> {
    base: &'a WorldState,
    changes: Changes,
    next_asset_id: u64,
}

impl Overlay<'_> {
    fn get_mut(&mut self, a: &Address) -> Option<&mut AccountState> {
        if !self.changes.accounts.contains_key(a) {
            let acct = self.base.accounts.get(a)?.clone();
            self.changes.accounts.insert(*a, acct);
        }
        self.changes.accounts.get_mut(a)
    }

    fn get_or_create(&mut self, a: &Address) -> &mut AccountState {
        if self.get_mut(a).is_none() {
            self.changes.accounts.insert(*a, AccountState::new(*a));
        }
        self.changes.accounts.get_mut(a).unwrap()
    }

    fn asset_exists(&self, id: AssetId) -> bool {
        self.base.assets.contains_key(&id) || self.changes.new_assets.iter().any(|x| x.asset_id == id)
    }

    fn apply(&mut self, index: usize, t: &Transaction) -> Result<(), LedgerError> {
        let sender = self
            .get_mut(&t.sender)
            .ok_or(LedgerError::UnknownAddress(t.sender))?;
        sender.balance = sender
            .balance
            .checked_sub(t.fee)
            .ok_or(LedgerError::InsufficientBalance { index })?;
        self.changes.fees = self.changes.fees + t.fee;

        match t.kind {
            TxKind::Payment => {
                let receiver = t.receiver.expect("checked well-formed");
                let sender = self.get_mut(&t.sender).unwrap();
                sender.balance = sender
                    .balance
                    .checked_sub(MicroAlgo(t.amount))
                    .ok_or(LedgerError::InsufficientBalance { index })?;
                let r = self.get_or_create(&receiver);
                r.balance = r
                    .balance
                    .checked_add(MicroAlgo(t.amount))
                    .ok_or(LedgerError::InsufficientBalance { index })?;
            }
            TxKind::AssetTransfer => {
                let asset = t.asset_id.expect("checked well-formed");
                let receiver = t.receiver.expect("checked well-formed");
                if !self.asset_exists(asset) {
                    return Err(LedgerError::UnknownAsset { index, asset });
                }
                let sender = self.get_mut(&t.sender).unwrap();
                let held = sender
                    .holdings
                    .get_mut(&asset)
                    .ok_or(LedgerError::NotOptedIn {
                        index,
                        address: t.sender,
                    })?;
                *held = held
                    .checked_sub(t.amount)
                    .ok_or(LedgerError::InsufficientBalance { index })?;
                let not_opted = LedgerError::NotOptedIn {
                    index,
                    address: receiver,
                };
                let r = self.get_mut(&receiver).ok_or(not_opted.clone())?;
                let held = r.holdings.get_mut(&asset).ok_or(not_opted)?;
                *held += t.amount;
            }
            TxKind::AssetOptIn => {
                let asset = t.asset_id.expect("checked well-formed");
                if !self.asset_exists(asset) {
                    return Err(LedgerError::UnknownAsset { index, asset });
                }
                let sender = self.get_mut(&t.sender).unwrap();
                sender.holdings.entry(asset).or_insert(0);
            }
            TxKind::AssetCreate => {
                let id = AssetId(self.next_asset_id);
                self.next_asset_id += 1;
                let name = String::from_utf8_lossy(&t.note).into_owned();
                self.changes.new_assets.push(AssetClass {
                    asset_id: id,
                    name,
                    total_supply: t.amount,
                    creator: t.sender,
                });
                let sender = self.get_mut(&t.sender).unwrap();
                sender.holdings.insert(id, t.amount);
            }
            TxKind::Note => {}
        }
        Ok(())
    }
}
