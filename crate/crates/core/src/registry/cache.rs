use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::binding::Tel;
use crate::ledger::Address;

use super::RegistryError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    /// Subscriber key account.
    pub address: Address,
    /// Option wallet contract, in contract mode.
    pub u_t: Option<Address>,
}

impl CacheEntry {
    /// Account holding the IN/OUT token.
    pub fn wallet(&self) -> Address {
        self.u_t.unwrap_or(self.address)
    }
}

/// The attestator's tel → account map, optionally mirrored to a file with
/// one `tel TAB address TAB u_t-or-dash` record per line.
#[derive(Clone, Debug, Default)]
pub struct IdentityCache {
    entries: BTreeMap<Tel, CacheEntry>,
    by_wallet: BTreeMap<Address, Tel>,
    by_address: BTreeMap<Address, Tel>,
    path: Option<PathBuf>,
}

impl IdentityCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads the file if present; later inserts append to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref().to_path_buf();
        let mut cache = IdentityCache {
            path: Some(path.clone()),
            ..Default::default()
        };
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(RegistryError::io)?;
            for (n, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let (tel, entry) = parse_line(line)
                    .ok_or_else(|| RegistryError::Cache(format!("line {}: {line:?}", n + 1)))?;
                cache.insert_mem(tel, entry);
            }
        }
        Ok(cache)
    }

    fn insert_mem(&mut self, tel: Tel, entry: CacheEntry) {
        self.by_wallet.insert(entry.wallet(), tel.clone());
        self.by_address.insert(entry.address, tel.clone());
        self.entries.insert(tel, entry);
    }

    pub fn insert(&mut self, tel: Tel, entry: CacheEntry) -> Result<(), RegistryError> {
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(RegistryError::io)?;
            f.write_all(format_line(&tel, &entry).as_bytes())
                .map_err(RegistryError::io)?;
        }
        self.insert_mem(tel, entry);
        Ok(())
    }

    pub fn remove(&mut self, tel: &Tel) -> Result<Option<CacheEntry>, RegistryError> {
        let old = self.entries.remove(tel);
        if let Some(e) = &old {
            self.by_wallet.remove(&e.wallet());
            self.by_address.remove(&e.address);
            self.save()?;
        }
        Ok(old)
    }

    /// Rewrites the backing file from memory.
    pub fn save(&self) -> Result<(), RegistryError> {
        if let Some(path) = &self.path {
            let mut text = String::new();
            for (tel, e) in &self.entries {
                text.push_str(&format_line(tel, e));
            }
            std::fs::write(path, text).map_err(RegistryError::io)?;
        }
        Ok(())
    }

    pub fn get(&self, tel: &Tel) -> Option<&CacheEntry> {
        self.entries.get(tel)
    }

    pub fn tel_of_wallet(&self, wallet: &Address) -> Option<&Tel> {
        self.by_wallet.get(wallet)
    }

    /// Number owned by a subscriber key account.
    pub fn tel_of_address(&self, address: &Address) -> Option<&Tel> {
        self.by_address.get(address)
    }

    pub fn contains(&self, tel: &Tel) -> bool {
        self.entries.contains_key(tel)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tel, &CacheEntry)> + '_ {
        self.entries.iter()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

fn format_line(tel: &Tel, e: &CacheEntry) -> String {
    let ut = e.u_t.map_or_else(|| "-".to_string(), |a| a.to_hex());
    format!("{tel}\t{}\t{ut}\n", e.address)
}

fn parse_line(line: &str) -> Option<(Tel, CacheEntry)> {
    let mut parts = line.split('\t');
    let tel = Tel::parse(parts.next()?).ok()?;
    let address = parts.next()?.parse().ok()?;
    let u_t = match parts.next()? {
        "-" => None,
        s => Some(s.parse().ok()?),
    };
    if parts.next().is_some() {
        return None;
    }
    Some((tel, CacheEntry { address, u_t }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.tsv");
        let mut c = IdentityCache::open(&p).unwrap();
        let t1 = Tel::parse("+391").unwrap();
        let t2 = Tel::parse("+392").unwrap();
        c.insert(t1.clone(), CacheEntry { address: Address([1; 32]), u_t: None }).unwrap();
        c.insert(
            t2.clone(),
            CacheEntry {
                address: Address([2; 32]),
                u_t: Some(Address([3; 32])),
            },
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(&format!("+391\t{}\t-\n", Address([1; 32]))));
        let back = IdentityCache::open(&p).unwrap();
        assert_eq!(back.get(&t2), c.get(&t2));
        assert_eq!(back.tel_of_wallet(&Address([3; 32])), Some(&t2));
    }

    #[test]
    fn corrupt_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.tsv");
        std::fs::write(&p, "+391\tnothex\t-\n").unwrap();
        assert!(matches!(IdentityCache::open(&p), Err(RegistryError::Cache(_))));
    }
}
