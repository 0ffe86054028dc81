//! Files the command line keeps next to the registry data.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use robinson_core::binding::Tel;
use robinson_core::registry::{IssuedChallenge, Nonce, Registry, SubscriberKeys, NONCE_LEN};

use crate::error::{CliError, ExitCode};

const LOCK_FILE: &str = "robinson.lock";
const CHALLENGES_FILE: &str = "challenges.tsv";

/// Exclusive claim on a data directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<DirLock, CliError> {
        if !dir.join("system.json").exists() {
            return Err(CliError::new(
                ExitCode::Io,
                "no-data-dir",
                format!("{} holds no registry; run init first", dir.display()),
            ));
        }
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::new(
                ExitCode::Locked,
                "locked",
                format!(
                    "{} is in use; remove {} if no other process runs",
                    dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(CliError::io(e, "lock")),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn open_registry(dir: &Path) -> Result<Registry, CliError> {
    if !dir.join("system.json").exists() {
        return Err(CliError::new(
            ExitCode::Io,
            "no-data-dir",
            format!("{} holds no registry; run init first", dir.display()),
        ));
    }
    Ok(Registry::open(dir)?)
}

pub fn read_keys(path: &Path) -> Result<SubscriberKeys, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(e, &path.display().to_string()))?;
    SubscriberKeys::from_keyfile(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Writes a new keyfile readable only by its owner. Never overwrites.
pub fn write_keys(path: &Path, keys: &SubscriberKeys) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(e, "keyfile directory"))?;
    }
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts
        .open(path)
        .map_err(|e| CliError::io(e, &path.display().to_string()))?;
    f.write_all(keys.to_keyfile().as_bytes())
        .map_err(|e| CliError::io(e, &path.display().to_string()))
}

pub fn parse_hex<const N: usize>(s: &str, what: &str) -> Result<[u8; N], CliError> {
    let bytes = hex::decode(s.trim()).map_err(|e| CliError::invalid(format!("{what}: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| CliError::invalid(format!("{what}: expected {N} bytes")))
}

/// One issued challenge per line: nonce, tel, claimed key, issue time.
pub struct ChallengeFile {
    path: PathBuf,
    rows: Vec<(Nonce, IssuedChallenge)>,
}

impl ChallengeFile {
    pub fn load(dir: &Path) -> Result<ChallengeFile, CliError> {
        let path = dir.join(CHALLENGES_FILE);
        let mut rows = Vec::new();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(CliError::io(e, CHALLENGES_FILE)),
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || CliError::new(ExitCode::Io, "io", format!("{CHALLENGES_FILE} line {}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            let [nonce, tel, key, at] = f[..] else { return Err(bad()) };
            let nonce: [u8; NONCE_LEN] = parse_hex(nonce, "nonce").map_err(|_| bad())?;
            rows.push((
                nonce,
                IssuedChallenge {
                    tel: Tel::parse(tel).map_err(|_| bad())?,
                    claimed_key: parse_hex(key, "key").map_err(|_| bad())?,
                    issued_at: at.parse().map_err(|_| bad())?,
                },
            ));
        }
        Ok(ChallengeFile { path, rows })
    }

    pub fn push(&mut self, nonce: Nonce, c: IssuedChallenge) {
        self.rows.push((nonce, c));
    }

    pub fn remove(&mut self, nonce: &Nonce) {
        self.rows.retain(|(n, _)| n != nonce);
    }

    pub fn restore_into(&self, reg: &mut Registry) {
        for (n, c) in &self.rows {
            reg.challenges_mut().restore(*n, c.clone());
        }
    }

    pub fn save(&self) -> Result<(), CliError> {
        let text: String = self
            .rows
            .iter()
            .map(|(n, c)| {
                format!(
                    "{}\t{}\t{}\t{}\n",
                    hex::encode(n),
                    c.tel,
                    hex::encode(c.claimed_key),
                    c.issued_at
                )
            })
            .collect();
        fs::write(&self.path, text).map_err(|e| CliError::io(e, CHALLENGES_FILE))
    }
}
