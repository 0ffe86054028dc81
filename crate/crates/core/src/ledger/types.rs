use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// 32-byte account identifier.
///
/// Key accounts use their Ed25519 public key verbatim; contract accounts use
/// the SHA-256 digest of their program bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 32]);

impl Address {
    pub const ZERO: Address = Address([0u8; 32]);

    pub fn from_program(program: &[u8]) -> Self {
        Address(sha256(program))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({}..)", &self.to_hex()[..12])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid address: expected 64 lowercase hex characters")]
pub struct ParseAddressError;

impl FromStr for Address {
    type Err = ParseAddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseAddressError);
        }
        let mut raw = [0u8; 32];
        hex::decode_to_slice(s, &mut raw).map_err(|_| ParseAddressError)?;
        Ok(Address(raw))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Currency amount in millionths of one Algo.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct MicroAlgo(pub u64);

impl MicroAlgo {
    pub const ZERO: MicroAlgo = MicroAlgo(0);
    pub const PER_ALGO: u64 = 1_000_000;

    pub fn from_algos(algos: u64) -> Self {
        MicroAlgo(algos * Self::PER_ALGO)
    }

    pub fn checked_add(self, other: MicroAlgo) -> Option<MicroAlgo> {
        self.0.checked_add(other.0).map(MicroAlgo)
    }

    pub fn checked_sub(self, other: MicroAlgo) -> Option<MicroAlgo> {
        self.0.checked_sub(other.0).map(MicroAlgo)
    }

    /// Whole Algos, if the amount is an exact multiple of one Algo.
    pub fn whole_algos(self) -> Option<u64> {
        (self.0 % Self::PER_ALGO == 0).then_some(self.0 / Self::PER_ALGO)
    }
}

impl std::ops::Add for MicroAlgo {
    type Output = MicroAlgo;
    fn add(self, rhs: MicroAlgo) -> MicroAlgo {
        MicroAlgo(self.0 + rhs.0)
    }
}

impl std::ops::Mul<u64> for MicroAlgo {
    type Output = MicroAlgo;
    fn mul(self, rhs: u64) -> MicroAlgo {
        MicroAlgo(self.0 * rhs)
    }
}

impl std::iter::Sum for MicroAlgo {
    fn sum<I: Iterator<Item = MicroAlgo>>(iter: I) -> MicroAlgo {
        MicroAlgo(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for MicroAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / Self::PER_ALGO, self.0 % Self::PER_ALGO)
    }
}

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AssetId(pub u64);

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A fungible asset class with fixed supply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetClass {
    pub asset_id: AssetId,
    pub name: String,
    pub total_supply: u64,
    pub creator: Address,
}

pub type Digest32 = [u8; 32];

pub fn sha256(data: &[u8]) -> Digest32 {
    Sha256::digest(data).into()
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; N];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}
