use ed25519_dalek::{Signer, SigningKey};
use serde::{Deserialize, Serialize};

use super::types::{hex_array, hex_bytes, sha256, Address, AssetId, Digest32, MicroAlgo};
use super::LedgerError;

/// Flat per-transaction fee.
pub const MIN_FEE: MicroAlgo = MicroAlgo(1000);
pub const MAX_NOTE_BYTES: usize = 1024;
pub const MAX_GROUP_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    #[serde(rename = "pay")]
    Payment,
    #[serde(rename = "axfer")]
    AssetTransfer,
    #[serde(rename = "optin")]
    AssetOptIn,
    #[serde(rename = "acfg")]
    AssetCreate,
    Note,
}

impl TxKind {
    /// Numeric code seen by guard programs. Zero is never a valid kind.
    pub fn code(self) -> u64 {
        match self {
            TxKind::Payment => 1,
            TxKind::AssetTransfer => 2,
            TxKind::AssetOptIn => 3,
            TxKind::AssetCreate => 4,
            TxKind::Note => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub amount: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<AssetId>,
    pub fee: MicroAlgo,
    pub first_valid: u64,
    pub kind: TxKind,
    #[serde(default, with = "hex_bytes", skip_serializing_if = "Vec::is_empty")]
    pub note: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<Address>,
    pub sender: Address,
}

impl Transaction {
    fn base(kind: TxKind, sender: Address) -> Self {
        Transaction {
            kind,
            sender,
            receiver: None,
            asset_id: None,
            amount: 0,
            fee: MIN_FEE,
            note: Vec::new(),
            first_valid: 0,
        }
    }

    pub fn payment(sender: Address, receiver: Address, amount: MicroAlgo) -> Self {
        Transaction {
            receiver: Some(receiver),
            amount: amount.0,
            ..Self::base(TxKind::Payment, sender)
        }
    }

    pub fn asset_transfer(sender: Address, receiver: Address, asset: AssetId, amount: u64) -> Self {
        Transaction {
            receiver: Some(receiver),
            asset_id: Some(asset),
            amount,
            ..Self::base(TxKind::AssetTransfer, sender)
        }
    }

    pub fn opt_in(sender: Address, asset: AssetId) -> Self {
        Transaction {
            asset_id: Some(asset),
            ..Self::base(TxKind::AssetOptIn, sender)
        }
    }

    /// Creates a new asset class; `name` travels in the note field.
    pub fn create_asset(sender: Address, name: &str, total_supply: u64) -> Self {
        Transaction {
            amount: total_supply,
            note: name.as_bytes().to_vec(),
            ..Self::base(TxKind::AssetCreate, sender)
        }
    }

    pub fn note(sender: Address, note: Vec<u8>) -> Self {
        Transaction {
            note,
            ..Self::base(TxKind::Note, sender)
        }
    }

    pub fn with_note(mut self, note: Vec<u8>) -> Self {
        self.note = note;
        self
    }

    pub fn with_fee(mut self, fee: MicroAlgo) -> Self {
        self.fee = fee;
        self
    }

    pub fn with_first_valid(mut self, height: u64) -> Self {
        self.first_valid = height;
        self
    }

    /// Canonical byte encoding: every field length-prefixed (u16 big endian)
    /// in the order kind, sender, receiver, asset_id, amount, fee, note,
    /// first_valid. Absent fields have zero length.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128 + self.note.len());
        put_field(&mut out, &[self.kind.code() as u8]);
        put_field(&mut out, self.sender.as_bytes());
        match &self.receiver {
            Some(r) => put_field(&mut out, r.as_bytes()),
            None => put_field(&mut out, &[]),
        }
        match self.asset_id {
            Some(a) => put_field(&mut out, &a.0.to_be_bytes()),
            None => put_field(&mut out, &[]),
        }
        put_field(&mut out, &self.amount.to_be_bytes());
        put_field(&mut out, &self.fee.0.to_be_bytes());
        put_field(&mut out, &self.note);
        put_field(&mut out, &self.first_valid.to_be_bytes());
        out
    }

    pub fn id(&self) -> TxId {
        TxId(sha256(&self.encode()))
    }

    /// Structural checks that do not need ledger state.
    pub(crate) fn check_well_formed(&self) -> Result<(), &'static str> {
        if self.note.len() > MAX_NOTE_BYTES {
            return Err("note exceeds 1024 bytes");
        }
        let needs_receiver = matches!(self.kind, TxKind::Payment | TxKind::AssetTransfer);
        if needs_receiver != self.receiver.is_some() {
            return Err("receiver presence does not match kind");
        }
        let needs_asset = matches!(self.kind, TxKind::AssetTransfer | TxKind::AssetOptIn);
        if needs_asset != self.asset_id.is_some() {
            return Err("asset_id presence does not match kind");
        }
        Ok(())
    }
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(bytes);
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxId(#[serde(with = "hex_array")] pub Digest32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(#[serde(with = "hex_array")] pub Digest32);

macro_rules! hex_display {
    ($t:ty) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }
        impl std::fmt::Debug for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}({}..)", stringify!($t), &hex::encode(self.0)[..12])
            }
        }
    };
}
hex_display!(TxId);
hex_display!(GroupId);

/// SHA-256 over the concatenated canonical encodings.
pub fn group_id(txns: &[Transaction]) -> GroupId {
    let mut buf = Vec::new();
    for t in txns {
        buf.extend_from_slice(&t.encode());
    }
    GroupId(sha256(&buf))
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sig(#[serde(with = "hex_array")] pub [u8; 64]);

impl std::fmt::Debug for Sig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Sig({}..)", &hex::encode(self.0)[..12])
    }
}

/// How one transaction's sender authorizes it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Authorization {
    /// Ed25519 signature by the sender key over the group id.
    Sig(Sig),
    /// Guard program whose digest is the sender address.
    Prog(#[serde(with = "hex_bytes")] Vec<u8>),
}

/// A signature over the group id by a key that is not (necessarily) a sender.
/// Guard programs observe its key as the group signer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoSignature {
    #[serde(with = "hex_array")]
    pub key: [u8; 32],
    pub sig: Sig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionGroup {
    pub auth: Vec<Authorization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosign: Option<CoSignature>,
    pub txns: Vec<Transaction>,
}

impl TransactionGroup {
    pub fn id(&self) -> GroupId {
        group_id(&self.txns)
    }

    pub fn builder(txns: Vec<Transaction>) -> GroupBuilder {
        GroupBuilder::new(txns)
    }

    /// The identity guard programs see as having signed the group: the
    /// co-signer if present, else the first signature-authorized sender.
    pub fn signer(&self) -> Option<[u8; 32]> {
        if let Some(c) = &self.cosign {
            return Some(c.key);
        }
        self.txns
            .iter()
            .zip(&self.auth)
            .find(|(_, a)| matches!(a, Authorization::Sig(_)))
            .map(|(t, _)| t.sender.0)
    }
}

/// Collects authorizations for a fixed list of transactions.
pub struct GroupBuilder {
    txns: Vec<Transaction>,
    gid: GroupId,
    auth: Vec<Option<Authorization>>,
    cosign: Option<CoSignature>,
}

impl GroupBuilder {
    pub fn new(txns: Vec<Transaction>) -> Self {
        let gid = group_id(&txns);
        let auth = vec![None; txns.len()];
        GroupBuilder {
            txns,
            gid,
            auth,
            cosign: None,
        }
    }

    pub fn id(&self) -> GroupId {
        self.gid
    }

    /// Signs every transaction whose sender is this key's address.
    pub fn sign(mut self, key: &SigningKey) -> Self {
        let me = Address(key.verifying_key().to_bytes());
        let sig = Sig(key.sign(&self.gid.0).to_bytes());
        for (t, a) in self.txns.iter().zip(self.auth.iter_mut()) {
            if t.sender == me {
                *a = Some(Authorization::Sig(sig));
            }
        }
        self
    }

    /// Attaches a program to every transaction sent by the program's address.
    pub fn program(mut self, program: &[u8]) -> Self {
        let addr = Address::from_program(program);
        for (t, a) in self.txns.iter().zip(self.auth.iter_mut()) {
            if t.sender == addr {
                *a = Some(Authorization::Prog(program.to_vec()));
            }
        }
        self
    }

    pub fn cosign(mut self, key: &SigningKey) -> Self {
        self.cosign = Some(CoSignature {
            key: key.verifying_key().to_bytes(),
            sig: Sig(key.sign(&self.gid.0).to_bytes()),
        });
        self
    }

    pub fn finish(self) -> Result<TransactionGroup, LedgerError> {
        let mut auth = Vec::with_capacity(self.auth.len());
        for (i, a) in self.auth.into_iter().enumerate() {
            auth.push(a.ok_or(LedgerError::MissingAuthorization(i))?);
        }
        Ok(TransactionGroup {
            auth,
            cosign: self.cosign,
            txns: self.txns,
        })
    }
}
