use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tx::TransactionGroup;
use super::types::{hex_array, sha256, Address, Digest32, MicroAlgo};
use super::LedgerError;

/// Sealed batch of groups. Field order is alphabetical so the serde output
/// is the canonical record (sorted keys, no whitespace).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub groups: Vec<TransactionGroup>,
    pub height: u64,
    #[serde(with = "hex_array")]
    pub prev_hash: Digest32,
    #[serde(with = "hex_array")]
    pub state_root: Digest32,
    pub timestamp: u64,
}

impl Block {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("block serialization is infallible")
    }

    pub fn from_record(line: &str) -> Result<Block, LedgerError> {
        serde_json::from_str(line).map_err(|e| LedgerError::Decode(e.to_string()))
    }

    pub fn hash(&self) -> Digest32 {
        sha256(self.to_record().as_bytes())
    }

    pub fn txn_count(&self) -> usize {
        self.groups.iter().map(|g| g.txns.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisAccount {
    pub address: Address,
    pub balance: MicroAlgo,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "opt_hex_bytes"
    )]
    pub program: Option<Vec<u8>>,
}

/// Initial allocations and chain parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub accounts: Vec<GenesisAccount>,
    /// Seconds between block slots.
    pub block_interval: u64,
    pub empty_blocks: bool,
    pub start_time: u64,
}

impl Default for Genesis {
    fn default() -> Self {
        Genesis {
            accounts: Vec::new(),
            block_interval: 5,
            empty_blocks: true,
            start_time: 0,
        }
    }
}

impl Genesis {
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("genesis serialization is infallible")
    }

    pub fn write(&self, path: &Path) -> Result<(), LedgerError> {
        std::fs::write(path, self.to_record() + "\n").map_err(LedgerError::io)
    }

    pub fn read(path: &Path) -> Result<Genesis, LedgerError> {
        let s = std::fs::read_to_string(path).map_err(LedgerError::io)?;
        serde_json::from_str(s.trim_end()).map_err(|e| LedgerError::Decode(e.to_string()))
    }
}

mod opt_hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_str(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| hex::decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Append-only block file, one canonical record per line.
#[derive(Debug)]
pub struct BlockLog {
    path: PathBuf,
    out: BufWriter<File>,
    bytes: u64,
}

impl BlockLog {
    /// Creates (or truncates) the log.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let f = File::create(&path).map_err(LedgerError::io)?;
        Ok(BlockLog {
            path,
            out: BufWriter::new(f),
            bytes: 0,
        })
    }

    pub fn open_append(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(LedgerError::io)?;
        let bytes = f.metadata().map_err(LedgerError::io)?.len();
        Ok(BlockLog {
            path,
            out: BufWriter::new(f),
            bytes,
        })
    }

    pub fn append_line(&mut self, record: &str) -> Result<(), LedgerError> {
        self.out.write_all(record.as_bytes()).map_err(LedgerError::io)?;
        self.out.write_all(b"\n").map_err(LedgerError::io)?;
        self.out.flush().map_err(LedgerError::io)?;
        self.bytes += record.len() as u64 + 1;
        Ok(())
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<Block>, LedgerError> {
        let f = File::open(path.as_ref()).map_err(LedgerError::io)?;
        BufReader::new(f)
            .lines()
            .map(|l| l.map_err(LedgerError::io).and_then(|l| Block::from_record(&l)))
            .collect()
    }
}
