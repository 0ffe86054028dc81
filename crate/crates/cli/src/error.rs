use std::fmt;

use robinson_core::ledger::LedgerError;
use robinson_core::prune::PruneError;
use robinson_core::registry::RegistryError;

/// Process exit codes. Clap itself exits with 2 on usage errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Io = 3,
    Locked = 4,
    NotEnrolled = 5,
    Conflict = 6,
    Unauthorized = 7,
    Funds = 8,
    InvalidInput = 9,
    LedgerRejected = 10,
    AuditDiffs = 11,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    /// Short stable identifier for scripts.
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            kind,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ExitCode::InvalidInput, "invalid-input", message)
    }

    pub fn io(e: std::io::Error, what: &str) -> Self {
        Self::new(ExitCode::Io, "io", format!("{what}: {e}"))
    }

    /// The single stderr line reported on failure.
    pub fn line(&self) -> String {
        format!(
            "error\tcode={}\tkind={}\tmessage={}",
            self.code as i32,
            self.kind,
            self.message.replace(['\n', '\t'], " ")
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn ledger_code(e: &LedgerError) -> (ExitCode, &'static str) {
    match e {
        LedgerError::InsufficientBalance { .. } | LedgerError::BelowMinBalance { .. } => {
            (ExitCode::Funds, "insufficient-funds")
        }
        LedgerError::BadSignature { .. }
        | LedgerError::MissingAuthorization(_)
        | LedgerError::GuardRejected { .. } => (ExitCode::Unauthorized, "unauthorized"),
        LedgerError::Io(_) | LedgerError::Decode(_) | LedgerError::ReplayMismatch(_) => {
            (ExitCode::Io, "io")
        }
        _ => (ExitCode::LedgerRejected, "ledger-rejected"),
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        use RegistryError::*;
        let (code, kind) = match &e {
            NotEnrolled(_) => (ExitCode::NotEnrolled, "not-enrolled"),
            DuplicateTel(_) => (ExitCode::Conflict, "duplicate-tel"),
            KeyInUse(_) => (ExitCode::Conflict, "key-in-use"),
            LedgerNotEmpty => (ExitCode::Conflict, "data-dir-not-empty"),
            ChallengeFailed => (ExitCode::Unauthorized, "challenge-failed"),
            UnknownNonce => (ExitCode::Unauthorized, "unknown-nonce"),
            Expired => (ExitCode::Unauthorized, "nonce-expired"),
            WrongSigner => (ExitCode::Unauthorized, "wrong-signer"),
            GuardRejected(_) => (ExitCode::Unauthorized, "guard-rejected"),
            TemplateMismatch => (ExitCode::Unauthorized, "template-mismatch"),
            InsufficientAttestatorFunds { .. } => (ExitCode::Funds, "attestator-funds"),
            TokensExhausted => (ExitCode::Funds, "tokens-exhausted"),
            InvalidConfig(_) => (ExitCode::InvalidInput, "invalid-config"),
            Binding(_) => (ExitCode::InvalidInput, "invalid-binding"),
            Ledger(l) => ledger_code(l),
            Cache(_) | Io(_) => (ExitCode::Io, "io"),
        };
        CliError::new(code, kind, e.to_string())
    }
}

impl From<PruneError> for CliError {
    fn from(e: PruneError) -> Self {
        match &e {
            PruneError::EmptyRequest => CliError::new(ExitCode::InvalidInput, "empty-request", e.to_string()),
            PruneError::InvalidTel { .. } => CliError::new(ExitCode::InvalidInput, "invalid-tel", e.to_string()),
            PruneError::Ledger(l) => {
                let (code, kind) = ledger_code(l);
                CliError::new(code, kind, e.to_string())
            }
        }
    }
}
