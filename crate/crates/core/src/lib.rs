//! Validation and commit phase of a permissioned-blockchain peer.
//!
//! A block passes through a structural check, syntactic validation,
//! endorsement-policy validation (vscc), and a multi-version concurrency
//! check (mvcc) before it is committed to the block ledger, the state
//! database, and the history database. Two arrangements are provided:
//! [`Mode::Baseline`] runs every stage in sequence; [`Mode::Optimized`]
//! caches chaincode definitions, overlaps vscc with the bulk state read,
//! and overlaps the commit writes.
//!
//! ```no_run
//! use valphase::{BackendKind, Mode, Pipeline, PipelineConfig, StoreConfig, Stores, Workload, WorkloadConfig};
//!
//! let dir = std::env::temp_dir().join("valphase-doc");
//! let stores = Stores::open(&dir, &StoreConfig::new(BackendKind::SlowRemote))?;
//! let workload = Workload::generate(&WorkloadConfig::default())?;
//! valphase::seed_genesis(&stores, &workload.genesis)?;
//! let pipeline = Pipeline::new(PipelineConfig::new(Mode::Optimized, BackendKind::SlowRemote), stores)?;
//! let report = pipeline.run_stream(workload.blocks)?;
//! println!("{:.0} tx/s", report.throughput());
//! # Ok::<(), valphase::Error>(())
//! ```

pub mod codec;
pub mod committer;
pub mod crypto;
pub mod error;
pub mod fault;
pub mod ledger;
pub mod mvcc;
pub mod pipeline;
pub mod policy;
pub mod statedb;
pub mod storage;
pub mod stores;
pub mod types;
pub mod vscc;
pub mod workload;

pub use committer::{commit, reconstruct, CommitPlan, HistoryPlacement, Mode, ReconstructReport};
pub use error::{CommitStep, Error, Result, StorageError};
pub use ledger::{BlockStore, HistoryDb};
pub use pipeline::{BlockOutcome, LatencyBreakdown, Pipeline, PipelineConfig, StreamReport};
pub use policy::EndorsementPolicy;
pub use statedb::{BackendKind, EmbeddedStateDb, LatencyModel, RemoteStateDb, StateDb};
pub use storage::DiskConfig;
pub use stores::{Heights, StoreConfig, Stores};
pub use types::{Block, ChaincodeInfo, Digest, Key, ReadSet, Transaction, ValidationCode, Version, WriteSet};
pub use vscc::{CachePolicy, VsccConfig};
pub use workload::{seed_genesis, Workload, WorkloadConfig};
