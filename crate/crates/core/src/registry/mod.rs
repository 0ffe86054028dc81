//! Robinson-list protocol layer: system initialisation, subscriber
//! enrollment, option switching, challenge checks and the attestator's
//! identity cache.
//!
//! Subscribers hold their token either directly in their key account
//! ([`Mode::Direct`]) or in a per-number owner contract ([`Mode::Contract`]).

mod cache;
mod challenge;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ed25519_dalek::{Signer, SigningKey};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::binding::{
    self, decode_note, encode_note, encrypt_binding, is_binding_note, BindingError, BindingPlain,
    EncKeypair, Role, Tel,
};
use crate::guard::{
    compile_owner_guard, compile_swap_guard, conforms_to_template, GuardProgram,
    OwnerGuardParams, SwapGuardParams,
};
use crate::ledger::{
    Address, AssetId, Authorization, CoSignature, Genesis, GroupId, InvariantViolation, Ledger,
    LedgerError, MicroAlgo, Sig, Transaction, TransactionGroup, TxId, TxKind, MIN_FEE,
    PER_ASSET_MIN_BALANCE, BASE_MIN_BALANCE,
};

pub use cache::{CacheEntry, IdentityCache};
pub use challenge::{
    answer_challenge, challenge_message, ChallengeBook, IssuedChallenge, Nonce, CHALLENGE_TTL,
    NONCE_LEN,
};

pub const IN_NAME: &str = "IN";
pub const OUT_NAME: &str = "OUT";

/// Min balance of an account opted in to both token classes.
pub const WALLET_MIN_BALANCE: MicroAlgo =
    MicroAlgo(BASE_MIN_BALANCE.0 + 2 * PER_ASSET_MIN_BALANCE.0);

/// C is refilled when its balance falls below its min balance plus this
/// many swap fees.
pub const REFILL_THRESHOLD_FEES: u64 = 10;

const GENESIS_FILE: &str = "genesis.json";
const BLOCKS_FILE: &str = "blocks.log";
const CACHE_FILE: &str = "cache.tsv";
const SYSTEM_FILE: &str = "system.json";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("ledger already has activity beyond genesis")]
    LedgerNotEmpty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} is already enrolled")]
    DuplicateTel(Tel),
    #[error("key {0} already owns an enrolled number")]
    KeyInUse(Address),
    #[error("challenge signature did not verify")]
    ChallengeFailed,
    #[error("wallet program does not match the standard template")]
    TemplateMismatch,
    #[error("attestator cannot cover {needed}, it holds {available}")]
    InsufficientAttestatorFunds {
        needed: MicroAlgo,
        available: MicroAlgo,
    },
    #[error("attestator has no OUT tokens left")]
    TokensExhausted,
    #[error("{0} is not enrolled")]
    NotEnrolled(String),
    #[error("request not signed by the owner key")]
    WrongSigner,
    #[error("guard program rejected transaction {0}")]
    GuardRejected(usize),
    #[error("unknown or already used nonce")]
    UnknownNonce,
    #[error("nonce expired")]
    Expired,
    #[error("ledger: {0}")]
    Ledger(LedgerError),
    #[error("binding: {0}")]
    Binding(#[from] BindingError),
    #[error("cache file: {0}")]
    Cache(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<LedgerError> for RegistryError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::GuardRejected { index } => RegistryError::GuardRejected(index),
            other => RegistryError::Ledger(other),
        }
    }
}

impl RegistryError {
    pub(crate) fn io(e: std::io::Error) -> Self {
        RegistryError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Direct,
    Contract,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Direct => "direct",
            Mode::Contract => "contract",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Mode::Direct),
            "contract" => Ok(Mode::Contract),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptionState {
    In,
    Out,
    None,
}

impl fmt::Display for OptionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionState::In => "in",
            OptionState::Out => "out",
            OptionState::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub attestator_endowment: MicroAlgo,
    pub auto_refill: bool,
    pub block_interval: u64,
    /// Genesis float of the swap contract, above its min balance.
    pub c_float: MicroAlgo,
    pub challenge_ttl: u64,
    pub empty_blocks: bool,
    /// Genesis balance of the account subscribers buy fee money from.
    pub exchange_endowment: MicroAlgo,
    pub expected_subscribers: u64,
    pub funding_per_subscriber: MicroAlgo,
    pub mode: Mode,
    pub refill_amount: MicroAlgo,
    pub seed: u64,
    /// Fee money each subscriber wallet receives at enrollment and on top-up.
    pub subscriber_fee_budget: MicroAlgo,
    pub token_supply: u64,
}

impl SystemConfig {
    /// Defaults sized for `expected` subscribers.
    pub fn for_subscribers(expected: u64, mode: Mode) -> Self {
        let funding = WALLET_MIN_BALANCE;
        let budget = MicroAlgo(10 * MIN_FEE.0);
        SystemConfig {
            attestator_endowment: (funding + MIN_FEE * 2) * expected + MicroAlgo::from_algos(100),
            auto_refill: true,
            block_interval: 5,
            c_float: MicroAlgo::from_algos(1),
            challenge_ttl: CHALLENGE_TTL,
            empty_blocks: true,
            exchange_endowment: budget * (expected * 8) + MicroAlgo::from_algos(100),
            expected_subscribers: expected,
            funding_per_subscriber: funding,
            mode,
            refill_amount: MicroAlgo::from_algos(1),
            seed: 0,
            subscriber_fee_budget: budget,
            token_supply: (expected * 2).max(2),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |m: &str| Err(RegistryError::InvalidConfig(m.to_string()));
        if self.token_supply == 0 {
            return bad("token supply must be positive");
        }
        if self.token_supply < self.expected_subscribers.saturating_mul(2) {
            return bad("token supply must be at least twice the expected subscribers");
        }
        let wallet_need = WALLET_MIN_BALANCE + MIN_FEE * 3;
        if self.funding_per_subscriber + self.subscriber_fee_budget < wallet_need {
            return bad("wallet funding does not cover min balance, opt-ins and one swap");
        }
        if self.subscriber_fee_budget < MIN_FEE * 3 {
            return bad("fee budget must cover two opt-ins and one swap");
        }
        if self.block_interval == 0 {
            return bad("block interval must be positive");
        }
        Ok(())
    }
}

/// Addresses and asset ids fixed at initialisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemInfo {
    pub attestator: Address,
    pub c_address: Address,
    pub exchange: Address,
    pub in_asset: AssetId,
    pub out_asset: AssetId,
}

#[derive(Clone)]
pub struct AttestatorKeys {
    pub sign: SigningKey,
    pub enc: EncKeypair,
}

impl AttestatorKeys {
    pub fn address(&self) -> Address {
        Address(self.sign.verifying_key().to_bytes())
    }
}

/// A subscriber's signing and encryption keys.
#[derive(Clone)]
pub struct SubscriberKeys {
    pub sign: SigningKey,
    pub enc: EncKeypair,
}

impl fmt::Debug for SubscriberKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubscriberKeys({})", self.address())
    }
}

impl SubscriberKeys {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SubscriberKeys {
            sign: SigningKey::generate(rng),
            enc: EncKeypair::generate(rng),
        }
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.sign.verifying_key().to_bytes()
    }

    pub fn address(&self) -> Address {
        Address(self.public_key())
    }

    /// Two lines of hex: the Ed25519 secret then the X25519 secret.
    pub fn to_keyfile(&self) -> String {
        format!(
            "{}\n{}\n",
            hex::encode(self.sign.to_bytes()),
            hex::encode(self.enc.secret)
        )
    }

    pub fn from_keyfile(text: &str) -> Result<Self, RegistryError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next32 = || -> Result<[u8; 32], RegistryError> {
            let line = lines
                .next()
                .ok_or_else(|| RegistryError::Io("keyfile needs two lines".into()))?;
            let bytes =
                hex::decode(line).map_err(|e| RegistryError::Io(format!("keyfile: {e}")))?;
            bytes
                .try_into()
                .map_err(|_| RegistryError::Io("keyfile key is not 32 bytes".into()))
        };
        let sign = SigningKey::from_bytes(&next32()?);
        let enc = EncKeypair::from_secret(next32()?);
        Ok(SubscriberKeys { sign, enc })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnrollmentReceipt {
    pub address: Address,
    pub group_ids: Vec<GroupId>,
    pub height: u64,
    pub tel: Tel,
    pub txids: Vec<TxId>,
    pub u_t: Option<Address>,
    pub wallet: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SwitchReceipt {
    pub from: String,
    pub group_id: GroupId,
    pub height: u64,
    /// Payment to C made before the swap, if one was needed.
    pub refill: Option<TxId>,
    pub to: String,
    /// Fee top-up of the wallet made before the swap, if one was needed.
    pub top_up: Option<TxId>,
    pub txids: Vec<TxId>,
    pub wallet: Address,
}

macro_rules! record_impl {
    ($($t:ty),*) => {$(
        impl $t {
            /// Canonical text record: compact JSON with sorted keys.
            pub fn to_record(&self) -> String {
                serde_json::to_string(self).expect("receipt serializes")
            }
        }
    )*};
}
record_impl!(EnrollmentReceipt, SwitchReceipt);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaymentReceipt {
    pub group_id: GroupId,
    pub txid: TxId,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CacheDiff {
    MissingInCache { tel: Tel, chain: CacheEntry },
    MissingOnChain { tel: Tel, cache: CacheEntry },
    Mismatch {
        tel: Tel,
        cache: CacheEntry,
        chain: CacheEntry,
    },
}

impl fmt::Display for CacheDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheDiff::MissingInCache { tel, chain } => {
                write!(f, "missing-in-cache\t{tel}\t{}", chain.wallet())
            }
            CacheDiff::MissingOnChain { tel, cache } => {
                write!(f, "missing-on-chain\t{tel}\t{}", cache.wallet())
            }
            CacheDiff::Mismatch { tel, cache, chain } => {
                write!(f, "mismatch\t{tel}\t{}\t{}", cache.wallet(), chain.wallet())
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub diffs: Vec<CacheDiff>,
    pub notes_scanned: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.diffs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryViolation {
    #[error(transparent)]
    Ledger(#[from] InvariantViolation),
    #[error("{tel}: wallet holds {in_held} IN and {out_held} OUT")]
    OptionConstraint { tel: Tel, in_held: u64, out_held: u64 },
}

/// A binding note found on chain, as seen by the attestator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainBinding {
    pub height: u64,
    pub plain: BindingPlain,
    pub wallet: Address,
}

impl ChainBinding {
    pub fn entry(&self) -> CacheEntry {
        let address = Address(self.plain.subscriber_key);
        CacheEntry {
            address,
            u_t: (self.wallet != address).then_some(self.wallet),
        }
    }
}

/// Walks the attestator's binding notes in chain order, sealed blocks first
/// and then, if asked, pending groups. `visit` returns false to stop early.
/// Returns the number of binding notes decrypted.
pub fn scan_bindings(
    ledger: &Ledger,
    attestator: &Address,
    enc_secret: &[u8; 32],
    include_pending: bool,
    mut visit: impl FnMut(ChainBinding) -> bool,
) -> usize {
    let mut notes = 0;
    let pending_height = ledger.height() + 1;
    let sealed = ledger.blocks().skip(1).map(|b| (b.height, b.groups.as_slice()));
    let pending = include_pending
        .then(|| (pending_height, ledger.pending_groups()))
        .into_iter();
    for (height, groups) in sealed.chain(pending) {
        for t in groups.iter().flat_map(|g| &g.txns) {
            if t.sender != *attestator || t.kind != TxKind::AssetTransfer {
                continue;
            }
            if !is_binding_note(&t.note) {
                continue;
            }
            let Ok(blob) = decode_note(&t.note) else {
                continue;
            };
            notes += 1;
            let Ok(plain) = binding::decrypt_binding(&blob, enc_secret, Role::Attestator) else {
                continue;
            };
            let b = ChainBinding {
                height,
                plain,
                wallet: t.receiver.expect("asset transfers have receivers"),
            };
            if !visit(b) {
                return notes;
            }
        }
    }
    notes
}

pub struct Registry {
    config: SystemConfig,
    info: SystemInfo,
    attestator: AttestatorKeys,
    exchange: SigningKey,
    swap_program: GuardProgram,
    ledger: Ledger,
    cache: IdentityCache,
    challenges: ChallengeBook,
    rng: ChaCha20Rng,
    data_dir: Option<PathBuf>,
}

struct DerivedKeys {
    attestator: AttestatorKeys,
    exchange: SigningKey,
    rng: ChaCha20Rng,
}

fn derive_keys(seed: u64) -> DerivedKeys {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sign = SigningKey::generate(&mut rng);
    let enc = EncKeypair::generate(&mut rng);
    let exchange = SigningKey::generate(&mut rng);
    DerivedKeys {
        attestator: AttestatorKeys { sign, enc },
        exchange,
        rng,
    }
}

fn swap_params(att: &AttestatorKeys) -> SwapGuardParams {
    // a fresh ledger numbers assets from 1; setup creates IN then OUT
    SwapGuardParams {
        in_asset: AssetId(1),
        out_asset: AssetId(2),
        admin_key: att.sign.verifying_key().to_bytes(),
    }
}

#[derive(Serialize, Deserialize)]
struct SystemRecord {
    config: SystemConfig,
    info: SystemInfo,
}

impl Registry {
    /// Initialises the system on a new in-memory ledger.
    pub fn init(config: SystemConfig) -> Result<Registry, RegistryError> {
        let ledger = Ledger::new(Genesis {
            block_interval: config.block_interval,
            empty_blocks: config.empty_blocks,
            ..Genesis::default()
        });
        Self::init_on(ledger, config)
    }

    /// Initialises on a caller-supplied ledger, which must be fresh.
    pub fn init_on(mut ledger: Ledger, config: SystemConfig) -> Result<Registry, RegistryError> {
        config.validate()?;
        if !ledger.is_fresh() {
            return Err(RegistryError::LedgerNotEmpty);
        }
        let DerivedKeys {
            attestator,
            exchange,
            rng,
        } = derive_keys(config.seed);
        let params = swap_params(&attestator);
        let swap_program = compile_swap_guard(&params);
        let att = attestator.address();
        let exch = Address(exchange.verifying_key().to_bytes());
        let c = swap_program.address();

        ledger.fund_genesis(att, config.attestator_endowment, None)?;
        ledger.fund_genesis(exch, config.exchange_endowment, None)?;
        let c_balance = WALLET_MIN_BALANCE + MIN_FEE * 2 + config.c_float;
        ledger.fund_genesis(c, c_balance, Some(swap_program.bytes().to_vec()))?;

        let supply = config.token_supply;
        let create = TransactionGroup::builder(vec![
            Transaction::create_asset(att, IN_NAME, supply),
            Transaction::create_asset(att, OUT_NAME, supply),
        ])
        .sign(&attestator.sign)
        .finish()?;
        ledger.submit_group(create)?;
        for (id, name) in [(params.in_asset, IN_NAME), (params.out_asset, OUT_NAME)] {
            let a = ledger.asset(id).expect("setup created both assets");
            debug_assert_eq!(a.name, name);
        }
        let optin = TransactionGroup::builder(vec![
            Transaction::opt_in(c, params.in_asset),
            Transaction::opt_in(c, params.out_asset),
        ])
        .program(swap_program.bytes())
        .cosign(&attestator.sign)
        .finish()?;
        ledger.submit_group(optin)?;
        let reserve = TransactionGroup::builder(vec![Transaction::asset_transfer(
            att,
            c,
            params.in_asset,
            supply,
        )])
        .sign(&attestator.sign)
        .finish()?;
        ledger.submit_group(reserve)?;
        let t = ledger.next_slot();
        ledger.seal_block(t)?;

        let ttl = config.challenge_ttl;
        Ok(Registry {
            config,
            info: SystemInfo {
                attestator: att,
                c_address: c,
                exchange: exch,
                in_asset: params.in_asset,
                out_asset: params.out_asset,
            },
            attestator,
            exchange,
            swap_program,
            ledger,
            cache: IdentityCache::in_memory(),
            challenges: ChallengeBook::new(ttl),
            rng,
            data_dir: None,
        })
    }

    /// Initialises a persistent system in `dir`, which must be absent or
    /// empty. Writes the genesis, the block log, the cache file and the
    /// system record.
    pub fn init_in_dir(dir: impl AsRef<Path>, config: SystemConfig) -> Result<Registry, RegistryError> {
        let dir = dir.as_ref();
        if dir.exists() {
            let mut it = std::fs::read_dir(dir).map_err(RegistryError::io)?;
            if it.next().is_some() {
                return Err(RegistryError::LedgerNotEmpty);
            }
        }
        std::fs::create_dir_all(dir).map_err(RegistryError::io)?;
        let mut reg = Self::init(config)?;
        reg.ledger.genesis().write(&dir.join(GENESIS_FILE))?;
        let ledger = std::mem::replace(&mut reg.ledger, Ledger::new(Genesis::default()));
        reg.ledger = ledger.with_log(dir.join(BLOCKS_FILE))?;
        reg.cache = IdentityCache::open(dir.join(CACHE_FILE))?;
        reg.cache.save()?;
        let record = SystemRecord {
            config: reg.config.clone(),
            info: reg.info,
        };
        std::fs::write(
            dir.join(SYSTEM_FILE),
            serde_json::to_string_pretty(&record).expect("system record serializes"),
        )
        .map_err(RegistryError::io)?;
        reg.data_dir = Some(dir.to_path_buf());
        Ok(reg)
    }

    /// Reopens a system written by [`Registry::init_in_dir`], replaying its
    /// block log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Registry, RegistryError> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join(SYSTEM_FILE)).map_err(RegistryError::io)?;
        let record: SystemRecord =
            serde_json::from_str(&text).map_err(|e| RegistryError::Io(e.to_string()))?;
        let genesis = Genesis::read(&dir.join(GENESIS_FILE))?;
        let blocks = crate::ledger::BlockLog::read_all(dir.join(BLOCKS_FILE))?;
        let mut ledger = Ledger::replay(genesis, blocks)?;
        ledger.attach_existing_log(dir.join(BLOCKS_FILE))?;
        let DerivedKeys {
            attestator,
            exchange,
            ..
        } = derive_keys(record.config.seed);
        let swap_program = compile_swap_guard(&swap_params(&attestator));
        if swap_program.address() != record.info.c_address {
            return Err(RegistryError::InvalidConfig(
                "seed does not reproduce the recorded swap contract".into(),
            ));
        }
        // later operations draw from a stream tied to the chain tip
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&record.config.seed.to_le_bytes());
        let tip = ledger.block_hash(ledger.height()).unwrap_or_default();
        for (s, t) in seed.iter_mut().zip(tip.iter()) {
            *s ^= t;
        }
        Ok(Registry {
            challenges: ChallengeBook::new(record.config.challenge_ttl),
            config: record.config,
            info: record.info,
            attestator,
            exchange,
            swap_program,
            ledger,
            cache: IdentityCache::open(dir.join(CACHE_FILE))?,
            rng: ChaCha20Rng::from_seed(seed),
            data_dir: Some(dir.to_path_buf()),
        })
    }

    /// In-memory copy for what-if exploration. The copy never writes files.
    pub fn fork(&self) -> Registry {
        let mut cache = IdentityCache::in_memory();
        for (tel, e) in self.cache.iter() {
            cache.insert(tel.clone(), *e).expect("in-memory insert");
        }
        Registry {
            config: self.config.clone(),
            info: self.info,
            attestator: self.attestator.clone(),
            exchange: self.exchange.clone(),
            swap_program: self.swap_program.clone(),
            ledger: self.ledger.fork(),
            cache,
            challenges: self.challenges.clone(),
            rng: self.rng.clone(),
            data_dir: None,
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn info(&self) -> &SystemInfo {
        &self.info
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Direct ledger access, for adversarial tests and tooling.
    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn cache(&self) -> &IdentityCache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut IdentityCache {
        &mut self.cache
    }

    pub fn attestator(&self) -> &AttestatorKeys {
        &self.attestator
    }

    pub fn swap_program(&self) -> &GuardProgram {
        &self.swap_program
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    /// Standard owner template for `owner_key`.
    pub fn owner_program(&self, owner_key: &[u8; 32]) -> GuardProgram {
        compile_owner_guard(&OwnerGuardParams {
            owner_key: *owner_key,
            c_address: self.info.c_address,
            in_asset: self.info.in_asset,
            out_asset: self.info.out_asset,
        })
    }

    /// Simulated time: the timestamp of the last sealed block.
    pub fn now(&self) -> u64 {
        self.ledger.last_block().timestamp
    }

    /// Seals the next block slot.
    pub fn seal(&mut self) -> Result<u64, RegistryError> {
        let t = self.ledger.next_slot();
        self.ledger.seal_block(t)?;
        Ok(self.ledger.height())
    }

    /// Seals `k` consecutive slots.
    pub fn advance_blocks(&mut self, k: u64) -> Result<u64, RegistryError> {
        for _ in 0..k {
            self.seal()?;
        }
        Ok(self.ledger.height())
    }

    /// Moves the simulated clock forward by `secs`, sealing due slots.
    pub fn advance_time(&mut self, secs: u64) -> Result<usize, RegistryError> {
        let target = self.now() + secs;
        Ok(self.ledger.advance_to(target)?)
    }

    // ---- challenges ----

    /// Issues a nonce for `tel`, delivered over the simulated phone channel.
    pub fn issue_challenge(&mut self, tel: &Tel, claimed_key: [u8; 32]) -> Nonce {
        let now = self.now();
        self.challenges
            .issue(&mut self.rng, tel.clone(), claimed_key, now)
    }

    pub fn verify_challenge(
        &mut self,
        tel: &Tel,
        nonce: &Nonce,
        signature: &[u8; 64],
    ) -> Result<bool, RegistryError> {
        let now = self.now();
        self.challenges.verify(tel, nonce, signature, now)
    }

    pub fn challenges(&self) -> &ChallengeBook {
        &self.challenges
    }

    pub fn challenges_mut(&mut self) -> &mut ChallengeBook {
        &mut self.challenges
    }

    // ---- enrollment ----

    /// Enrolls `tel` after running the simulated challenge exchange, with
    /// the standard wallet template in contract mode.
    pub fn enroll(
        &mut self,
        tel: &Tel,
        keys: &SubscriberKeys,
    ) -> Result<EnrollmentReceipt, RegistryError> {
        self.precheck_enroll(tel, keys)?;
        let nonce = self.issue_challenge(tel, keys.public_key());
        let sig = answer_challenge(&keys.sign, tel, &nonce);
        self.enroll_with_challenge(tel, keys, &nonce, &sig, None)
    }

    /// Enrolls `tel` given an answered challenge. `program` overrides the
    /// wallet contract in contract mode and must match the standard template.
    pub fn enroll_with_challenge(
        &mut self,
        tel: &Tel,
        keys: &SubscriberKeys,
        nonce: &Nonce,
        signature: &[u8; 64],
        program: Option<&[u8]>,
    ) -> Result<EnrollmentReceipt, RegistryError> {
        self.precheck_enroll(tel, keys)?;
        let pk = keys.public_key();
        let claimed = self.challenges.claimed_key(nonce);
        if !self.verify_challenge(tel, nonce, signature)? || claimed != Some(pk) {
            return Err(RegistryError::ChallengeFailed);
        }
        match self.config.mode {
            Mode::Direct => self.enroll_direct(tel, keys),
            Mode::Contract => {
                let program = match program {
                    Some(p) => {
                        if !conforms_to_template(
                            p,
                            &pk,
                            &self.info.c_address,
                            self.info.in_asset,
                            self.info.out_asset,
                        ) {
                            return Err(RegistryError::TemplateMismatch);
                        }
                        p.to_vec()
                    }
                    None => self.owner_program(&pk).bytes().to_vec(),
                };
                self.enroll_contract(tel, keys, &program)
            }
        }
    }

    fn precheck_enroll(&self, tel: &Tel, keys: &SubscriberKeys) -> Result<(), RegistryError> {
        if self.cache.contains(tel) {
            return Err(RegistryError::DuplicateTel(tel.clone()));
        }
        let addr = keys.address();
        if self.cache.tel_of_address(&addr).is_some() {
            return Err(RegistryError::KeyInUse(addr));
        }
        let att = self.ledger.account(&self.info.attestator);
        let available = att.map_or(MicroAlgo::ZERO, |a| a.balance);
        let att_min = att.map_or(BASE_MIN_BALANCE, |a| a.min_balance());
        let needed = att_min + self.config.funding_per_subscriber + MIN_FEE * 2;
        if available < needed {
            return Err(RegistryError::InsufficientAttestatorFunds { needed, available });
        }
        if att.map_or(0, |a| a.holding(self.info.out_asset)) == 0 {
            return Err(RegistryError::TokensExhausted);
        }
        Ok(())
    }

    fn binding_note(&mut self, tel: &Tel, keys: &SubscriberKeys) -> Vec<u8> {
        let plain = BindingPlain {
            subscriber_key: keys.public_key(),
            tel: tel.clone(),
        };
        let blob = encrypt_binding(
            &plain,
            &keys.enc.public,
            &self.attestator.enc.public,
            &mut self.rng,
        );
        encode_note(&blob)
    }

    fn exchange_address(&self) -> Address {
        self.info.exchange
    }

    /// One atomic group: funding, fee budget, both opt-ins and the default
    /// OUT token carrying the binding.
    fn enroll_direct(
        &mut self,
        tel: &Tel,
        keys: &SubscriberKeys,
    ) -> Result<EnrollmentReceipt, RegistryError> {
        let wallet = keys.address();
        if self
            .ledger
            .account(&wallet)
            .is_some_and(|a| !a.holdings.is_empty())
        {
            return Err(RegistryError::KeyInUse(wallet));
        }
        let note = self.binding_note(tel, keys);
        let att = self.info.attestator;
        let txns = vec![
            Transaction::payment(att, wallet, self.config.funding_per_subscriber),
            Transaction::payment(self.exchange_address(), wallet, self.config.subscriber_fee_budget),
            Transaction::opt_in(wallet, self.info.in_asset),
            Transaction::opt_in(wallet, self.info.out_asset),
            Transaction::asset_transfer(att, wallet, self.info.out_asset, 1).with_note(note),
        ];
        let group = TransactionGroup::builder(txns)
            .sign(&self.attestator.sign)
            .sign(&self.exchange)
            .sign(&keys.sign)
            .finish()?;
        let r = self.ledger.submit_group(group)?;
        let entry = CacheEntry {
            address: wallet,
            u_t: None,
        };
        self.cache.insert(tel.clone(), entry)?;
        Ok(EnrollmentReceipt {
            address: wallet,
            group_ids: vec![r.group_id],
            height: r.height,
            tel: tel.clone(),
            txids: r.txids,
            u_t: None,
            wallet,
        })
    }

    /// Three groups: funding of U_t, U_t's owner-signed opt-ins, then the
    /// default OUT token carrying the binding. Steps already on the ledger
    /// from an interrupted earlier attempt are skipped.
    fn enroll_contract(
        &mut self,
        tel: &Tel,
        keys: &SubscriberKeys,
        program: &[u8],
    ) -> Result<EnrollmentReceipt, RegistryError> {
        let address = keys.address();
        let u_t = self.ledger.create_contract_account(program)?;
        let (in_a, out_a) = (self.info.in_asset, self.info.out_asset);
        let acct = self.ledger.account(&u_t).cloned();
        if acct
            .as_ref()
            .is_some_and(|a| a.holding(in_a) + a.holding(out_a) > 0)
        {
            return Err(RegistryError::KeyInUse(address));
        }
        let att = self.info.attestator;
        let mut group_ids = Vec::new();
        let mut txids = Vec::new();
        let mut height = self.ledger.height() + 1;

        let funded = acct.as_ref().map_or(MicroAlgo::ZERO, |a| a.balance);
        if funded < self.config.funding_per_subscriber {
            let g = TransactionGroup::builder(vec![
                Transaction::payment(att, u_t, self.config.funding_per_subscriber),
                Transaction::payment(self.exchange_address(), u_t, self.config.subscriber_fee_budget),
            ])
            .sign(&self.attestator.sign)
            .sign(&self.exchange)
            .finish()?;
            let r = self.ledger.submit_group(g)?;
            group_ids.push(r.group_id);
            txids.extend(r.txids);
        }
        let opted = acct
            .as_ref()
            .is_some_and(|a| a.is_opted_in(in_a) && a.is_opted_in(out_a));
        if !opted {
            let g = TransactionGroup::builder(vec![
                Transaction::opt_in(u_t, in_a),
                Transaction::opt_in(u_t, out_a),
            ])
            .program(program)
            .cosign(&keys.sign)
            .finish()?;
            let r = self.ledger.submit_group(g)?;
            group_ids.push(r.group_id);
            txids.extend(r.txids);
        }
        let note = self.binding_note(tel, keys);
        let g = TransactionGroup::builder(vec![
            Transaction::asset_transfer(att, u_t, out_a, 1).with_note(note),
        ])
        .sign(&self.attestator.sign)
        .finish()?;
        let r = self.ledger.submit_group(g)?;
        group_ids.push(r.group_id);
        txids.extend(r.txids);
        height = height.max(r.height);
        let entry = CacheEntry {
            address,
            u_t: Some(u_t),
        };
        self.cache.insert(tel.clone(), entry)?;
        Ok(EnrollmentReceipt {
            address,
            group_ids,
            height,
            tel: tel.clone(),
            txids,
            u_t: Some(u_t),
            wallet: u_t,
        })
    }

    // ---- options ----

    /// Option of `tel` at the last sealed block.
    pub fn current_option(&self, tel: &Tel) -> OptionState {
        match self.cache.get(tel) {
            Some(e) => self.option_of_wallet(&e.wallet()),
            None => OptionState::None,
        }
    }

    /// Option held by `wallet` at the last sealed block.
    pub fn option_of_wallet(&self, wallet: &Address) -> OptionState {
        let i = self.ledger.sealed_holding(wallet, self.info.in_asset).unwrap_or(0);
        let o = self.ledger.sealed_holding(wallet, self.info.out_asset).unwrap_or(0);
        match (i, o) {
            (1, 0) => OptionState::In,
            (0, 1) => OptionState::Out,
            _ => OptionState::None,
        }
    }

    /// Option of the working state, including unsealed groups.
    fn working_option(&self, wallet: &Address) -> OptionState {
        let Some(a) = self.ledger.account(wallet) else {
            return OptionState::None;
        };
        match (a.holding(self.info.in_asset), a.holding(self.info.out_asset)) {
            (1, 0) => OptionState::In,
            (0, 1) => OptionState::Out,
            _ => OptionState::None,
        }
    }

    pub fn switch_option(
        &mut self,
        tel: &Tel,
        signer: &SigningKey,
    ) -> Result<SwitchReceipt, RegistryError> {
        let entry = *self
            .cache
            .get(tel)
            .ok_or_else(|| RegistryError::NotEnrolled(tel.to_string()))?;
        self.switch_entry(entry, signer)
    }

    /// Switch addressed by wallet (the key account or U_t).
    pub fn switch_wallet(
        &mut self,
        wallet: &Address,
        signer: &SigningKey,
    ) -> Result<SwitchReceipt, RegistryError> {
        let tel = self
            .cache
            .tel_of_wallet(wallet)
            .ok_or_else(|| RegistryError::NotEnrolled(wallet.to_string()))?;
        let entry = *self.cache.get(tel).expect("index and map agree");
        self.switch_entry(entry, signer)
    }

    fn switch_entry(
        &mut self,
        entry: CacheEntry,
        signer: &SigningKey,
    ) -> Result<SwitchReceipt, RegistryError> {
        let wallet = entry.wallet();
        let from = self.working_option(&wallet);
        let (give, get, to) = match from {
            OptionState::Out => (self.info.out_asset, self.info.in_asset, OptionState::In),
            OptionState::In => (self.info.in_asset, self.info.out_asset, OptionState::Out),
            OptionState::None => {
                return Err(RegistryError::NotEnrolled(wallet.to_string()));
            }
        };
        let group = self.swap_group(&entry, give, get, signer);
        // no refills are spent on a request the owner did not sign
        let owner_signed = signer.verifying_key().to_bytes() == entry.address.0;
        let top_up_needed = owner_signed && self.needs_top_up(&wallet);
        let refill_needed = owner_signed && self.config.auto_refill && self.c_needs_refill();
        let refill = if refill_needed {
            Some(self.refill_c(self.config.refill_amount)?.txid)
        } else {
            None
        };
        let top_up = if top_up_needed {
            Some(self.top_up(&wallet)?)
        } else {
            None
        };
        let r = self.ledger.submit_group(group).map_err(map_switch_error)?;
        Ok(SwitchReceipt {
            from: from.to_string(),
            group_id: r.group_id,
            height: r.height,
            refill,
            to: to.to_string(),
            top_up,
            txids: r.txids,
            wallet,
        })
    }

    /// The two-transfer swap group, authorized by `signer` on the wallet
    /// side. A wrong signer yields a group the ledger rejects.
    pub fn swap_group(
        &self,
        entry: &CacheEntry,
        give: AssetId,
        get: AssetId,
        signer: &SigningKey,
    ) -> TransactionGroup {
        let wallet = entry.wallet();
        let c = self.info.c_address;
        let txns = vec![
            Transaction::asset_transfer(wallet, c, give, 1),
            Transaction::asset_transfer(c, wallet, get, 1),
        ];
        let gid = crate::ledger::group_id(&txns);
        let sig = Sig(signer.sign(&gid.0).to_bytes());
        let c_auth = Authorization::Prog(self.swap_program.bytes().to_vec());
        match entry.u_t {
            None => TransactionGroup {
                auth: vec![Authorization::Sig(sig), c_auth],
                cosign: None,
                txns,
            },
            Some(u_t) => {
                let prog = self
                    .ledger
                    .account(&u_t)
                    .and_then(|a| a.program.clone())
                    .unwrap_or_else(|| self.owner_program(entry.address.as_bytes()).bytes().to_vec());
                TransactionGroup {
                    auth: vec![Authorization::Prog(prog), c_auth],
                    cosign: Some(CoSignature {
                        key: signer.verifying_key().to_bytes(),
                        sig,
                    }),
                    txns,
                }
            }
        }
    }

    fn needs_top_up(&self, wallet: &Address) -> bool {
        self.ledger
            .account(wallet)
            .is_some_and(|a| a.balance < a.min_balance() + MIN_FEE)
    }

    /// The subscriber buys more fee money from the exchange account.
    fn top_up(&mut self, wallet: &Address) -> Result<TxId, RegistryError> {
        let g = TransactionGroup::builder(vec![Transaction::payment(
            self.exchange_address(),
            *wallet,
            self.config.subscriber_fee_budget,
        )])
        .sign(&self.exchange)
        .finish()?;
        let r = self.ledger.submit_group(g)?;
        Ok(r.txids[0])
    }

    // ---- C maintenance ----

    pub fn c_balance(&self) -> MicroAlgo {
        self.ledger.balance(&self.info.c_address)
    }

    pub fn c_refill_threshold(&self) -> MicroAlgo {
        let min = self
            .ledger
            .min_balance(&self.info.c_address)
            .unwrap_or(WALLET_MIN_BALANCE);
        min + MIN_FEE * REFILL_THRESHOLD_FEES
    }

    pub fn c_needs_refill(&self) -> bool {
        self.c_balance() < self.c_refill_threshold()
    }

    /// Pays `amount` from the attestator to C.
    pub fn refill_c(&mut self, amount: MicroAlgo) -> Result<PaymentReceipt, RegistryError> {
        let att = self.info.attestator;
        let acct = self.ledger.account(&att);
        let available = acct.map_or(MicroAlgo::ZERO, |a| a.balance);
        let needed = acct.map_or(BASE_MIN_BALANCE, |a| a.min_balance()) + amount + MIN_FEE;
        if available < needed {
            return Err(RegistryError::InsufficientAttestatorFunds { needed, available });
        }
        let g = TransactionGroup::builder(vec![Transaction::payment(
            att,
            self.info.c_address,
            amount,
        )])
        .sign(&self.attestator.sign)
        .finish()?;
        let r = self.ledger.submit_group(g)?;
        Ok(PaymentReceipt {
            group_id: r.group_id,
            txid: r.txids[0],
            height: r.height,
        })
    }

    /// Refills C only when it is below the threshold.
    pub fn maybe_refill_c(&mut self) -> Result<Option<PaymentReceipt>, RegistryError> {
        if self.c_needs_refill() {
            self.refill_c(self.config.refill_amount).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn set_auto_refill(&mut self, on: bool) {
        self.config.auto_refill = on;
    }

    // ---- audit ----

    /// All bindings on chain (sealed and pending), decrypted as attestator.
    pub fn chain_bindings(&self) -> (BTreeMap<Tel, CacheEntry>, usize) {
        let mut map = BTreeMap::new();
        let notes = scan_bindings(
            &self.ledger,
            &self.info.attestator,
            &self.attestator.enc.secret,
            true,
            |b| {
                map.insert(b.plain.tel.clone(), b.entry());
                true
            },
        );
        (map, notes)
    }

    /// Rebuilds the tel map from chain and reports differences to the cache.
    pub fn audit_cache(&self) -> AuditReport {
        let (chain, notes_scanned) = self.chain_bindings();
        let mut diffs = Vec::new();
        for (tel, c) in &chain {
            match self.cache.get(tel) {
                None => diffs.push(CacheDiff::MissingInCache {
                    tel: tel.clone(),
                    chain: *c,
                }),
                Some(e) if e != c => diffs.push(CacheDiff::Mismatch {
                    tel: tel.clone(),
                    cache: *e,
                    chain: *c,
                }),
                Some(_) => {}
            }
        }
        for (tel, e) in self.cache.iter() {
            if !chain.contains_key(tel) {
                diffs.push(CacheDiff::MissingOnChain {
                    tel: tel.clone(),
                    cache: *e,
                });
            }
        }
        AuditReport {
            diffs,
            notes_scanned,
        }
    }

    // ---- invariants ----

    /// Ledger invariants plus the option constraint on every enrolled wallet
    /// whose enrollment is sealed.
    pub fn check_invariants(&self) -> Result<(), RegistryViolation> {
        self.ledger.check_invariants()?;
        for (tel, e) in self.cache.iter() {
            let w = e.wallet();
            let (Some(i), Some(o)) = (
                self.ledger.sealed_holding(&w, self.info.in_asset),
                self.ledger.sealed_holding(&w, self.info.out_asset),
            ) else {
                continue;
            };
            if i + o == 0 && !self.enrollment_sealed(&w) {
                continue;
            }
            if i + o != 1 {
                return Err(RegistryViolation::OptionConstraint {
                    tel: tel.clone(),
                    in_held: i,
                    out_held: o,
                });
            }
        }
        Ok(())
    }

    fn enrollment_sealed(&self, wallet: &Address) -> bool {
        // the OUT delivery may still be pending after the opt-ins were sealed
        !self
            .ledger
            .pending_groups()
            .iter()
            .flat_map(|g| &g.txns)
            .any(|t| t.receiver == Some(*wallet) && t.sender == self.info.attestator && t.asset_id.is_some())
    }
}

fn map_switch_error(e: LedgerError) -> RegistryError {
    match e {
        LedgerError::BadSignature { index: Some(0) } | LedgerError::MissingAuthorization(0) => {
            RegistryError::WrongSigner
        }
        other => other.into(),
    }
}
