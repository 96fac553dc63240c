use std::fmt;
use std::io;

/// Failures raised by the storage layer (state database, ledger, history).
#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("injected fault in {0}")]
    Injected(&'static str),
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("storage service is shut down")]
    Closed,
}

/// Which step of a block commit failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitStep {
    Ledger,
    StateDb,
    History,
}

impl fmt::Display for CommitStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommitStep::Ledger => "ledger write",
            CommitStep::StateDb => "state database write",
            CommitStep::History => "history database write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("block {0} not found")]
    NotFound(u64),
    #[error("unknown chaincode {0:?}")]
    UnknownChaincode(String),
    #[error("malformed encoding: {0}")]
    Decode(String),
    #[error("block {number} rejected: {reason}")]
    InvalidBlock { number: u64, reason: String },
    #[error("commit of block {number} failed during {step}: {source}")]
    Commit {
        number: u64,
        step: CommitStep,
        #[source]
        source: Box<Error>,
    },
    #[error("ledger is behind the databases (ledger height {ledger:?}, state savepoint {savepoint:?})")]
    LedgerBehind {
        ledger: Option<u64>,
        savepoint: Option<u64>,
    },
    #[error("stores cannot be repaired from the local ledger (ledger height {ledger:?}, state savepoint {state:?}, history savepoint {history:?})")]
    Unrepairable {
        ledger: Option<u64>,
        state: Option<u64>,
        history: Option<u64>,
    },
    #[error("stores are inconsistent and need reconstruction (ledger height {ledger:?}, state savepoint {state:?}, history savepoint {history:?})")]
    NeedsRecovery {
        ledger: Option<u64>,
        state: Option<u64>,
        history: Option<u64>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Storage(StorageError::Io(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
