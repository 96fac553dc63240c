//! Per-block validation phase: structural check, syntactic validation,
//! vscc, mvcc, and commit, in either the sequential or the overlapped
//! arrangement, with per-stage timings.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crate::committer::{
    commit_baseline, commit_optimized, reconstruct, CommitPlan, CommitTimings, Mode, ReconstructReport,
};
use crate::crypto::compute_data_hash;
use crate::error::{Error, Result};
use crate::mvcc::{build_snapshot_bulk, candidates, mvcc_validate, ReadSnapshot};
use crate::statedb::BackendKind;
use crate::stores::Stores;
use crate::types::{Block, ValidationCode, SYSTEM_NAMESPACE};
use crate::vscc::{syntactic_validate, Validator, VsccConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub backend: BackendKind,
    pub vscc: VsccConfig,
    pub ledger_retry_limit: u32,
    pub retry_backoff: Duration,
    /// Informational only.
    pub block_size: usize,
}

impl PipelineConfig {
    pub fn new(mode: Mode, backend: BackendKind) -> Self {
        let plan = CommitPlan::new(mode, backend);
        PipelineConfig {
            mode,
            backend,
            vscc: VsccConfig::default(),
            ledger_retry_limit: plan.ledger_retry_limit,
            retry_backoff: plan.retry_backoff,
            block_size: 0,
        }
    }

    pub fn commit_plan(&self) -> CommitPlan {
        CommitPlan {
            mode: self.mode,
            backend: self.backend,
            ledger_retry_limit: self.ledger_retry_limit,
            retry_backoff: self.retry_backoff,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.vscc.check()?;
        if self.ledger_retry_limit == 0 {
            return Err(Error::Config("ledger_retry_limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-block stage latencies in microseconds.
///
/// Baseline rows fill the six sequential components; `others` is the
/// residual, so they sum to `total` exactly. Optimized rows report
/// `vscc_statedb_read`, `mvcc`, `ledger_statedb_write`, and `others`
/// (again the residual) and keep the per-task times in the sequential
/// columns for comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LatencyBreakdown {
    pub block_num: u64,
    pub num_txs: u64,
    pub num_valid: u64,
    pub vscc_us: u64,
    pub statedb_read_us: u64,
    pub mvcc_us: u64,
    pub ledger_write_us: u64,
    pub statedb_write_us: u64,
    pub others_us: u64,
    pub vscc_statedb_read_us: u64,
    pub ledger_statedb_write_us: u64,
    pub total_us: u64,
}

impl LatencyBreakdown {
    /// Sum of the components that partition `total_us` in `mode`.
    pub fn component_sum(&self, mode: Mode) -> u64 {
        match mode {
            Mode::Baseline => {
                self.vscc_us
                    + self.statedb_read_us
                    + self.mvcc_us
                    + self.ledger_write_us
                    + self.statedb_write_us
                    + self.others_us
            }
            Mode::Optimized => {
                self.vscc_statedb_read_us + self.mvcc_us + self.ledger_statedb_write_us + self.others_us
            }
        }
    }

    /// The accounting invariants for `mode`.
    pub fn is_consistent(&self, mode: Mode) -> bool {
        let sums = self.component_sum(mode) == self.total_us;
        match mode {
            Mode::Baseline => sums && self.vscc_statedb_read_us == 0 && self.ledger_statedb_write_us == 0,
            Mode::Optimized => {
                sums && self.vscc_statedb_read_us >= self.vscc_us.max(self.statedb_read_us)
                    && self.ledger_statedb_write_us >= self.ledger_write_us.max(self.statedb_write_us)
            }
        }
    }
}

/// A committed block with its final codes, timings, and wall-clock span.
#[derive(Clone, Debug)]
pub struct BlockOutcome {
    pub block: Block,
    pub breakdown: LatencyBreakdown,
    pub started: Instant,
    pub finished: Instant,
}

#[derive(Clone, Debug, Default)]
pub struct StreamReport {
    pub breakdowns: Vec<LatencyBreakdown>,
    pub committed_txs: u64,
    pub valid_txs: u64,
}

impl StreamReport {
    pub fn total_us(&self) -> u64 {
        self.breakdowns.iter().map(|b| b.total_us).sum()
    }

    /// Committed transactions (valid and invalid) per second of block
    /// processing time; 0 for an empty stream.
    pub fn throughput(&self) -> f64 {
        throughput(self.committed_txs, self.total_us())
    }
}

pub fn throughput(txs: u64, total_us: u64) -> f64 {
    if total_us == 0 {
        0.0
    } else {
        txs as f64 / total_us as f64 * 1e6
    }
}

fn us(d: Duration) -> u64 {
    d.as_micros() as u64
}

struct Stage {
    vscc: Duration,
    statedb_read: Duration,
    vscc_statedb_read: Duration,
    mvcc: Duration,
    commit: CommitTimings,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    stores: Stores,
    validator: Validator,
    in_flight: AtomicBool,
    needs_recovery: AtomicBool,
}

struct InFlight<'a>(&'a AtomicBool);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, stores: Stores) -> Result<Self> {
        cfg.check()?;
        if stores.backend() != cfg.backend {
            return Err(Error::Config(format!(
                "pipeline configured for {} but stores use {}",
                cfg.backend,
                stores.backend()
            )));
        }
        let consistent = stores.heights()?.consistent();
        Ok(Pipeline {
            validator: Validator::new(cfg.vscc.clone())?,
            cfg,
            stores,
            in_flight: AtomicBool::new(false),
            needs_recovery: AtomicBool::new(!consistent),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stores(&self) -> &Stores {
        &self.stores
    }

    pub fn validator(&self) -> &Validator {
        &self.validator
    }

    fn structural_check(&self, block: &Block) -> Result<()> {
        let reject = |reason: String| Error::InvalidBlock {
            number: block.number,
            reason,
        };
        let expected = self.stores.ledger.height().map_or(0, |h| h + 1);
        if block.number != expected {
            return Err(reject(format!("expected block {expected}")));
        }
        if block.prev_hash != self.stores.ledger.last_header_hash() {
            return Err(reject("previous hash does not match the ledger".into()));
        }
        if block.data_hash != compute_data_hash(&block.transactions) {
            return Err(reject("data hash does not match the transactions".into()));
        }
        Ok(())
    }

    fn run_baseline(&self, block: &mut Block) -> Result<Stage> {
        let statedb = self.stores.statedb.as_ref();
        let t = Instant::now();
        let mut codes = syntactic_validate(block);
        self.validator.validate(block, &mut codes, statedb)?;
        let vscc = t.elapsed();

        let t = Instant::now();
        let snapshot = match self.cfg.backend {
            BackendKind::SlowRemote => Some(build_snapshot_bulk(statedb, candidates(block, &codes))?),
            BackendKind::FastEmbedded => None,
        };
        let statedb_read = if snapshot.is_some() { t.elapsed() } else { Duration::ZERO };

        let t = Instant::now();
        mvcc_validate(block, &mut codes, snapshot.as_ref(), statedb)?;
        finalize(block, &codes);
        let mvcc = t.elapsed();

        let commit = commit_baseline(block, &self.stores)?;
        Ok(Stage {
            vscc,
            statedb_read,
            vscc_statedb_read: Duration::ZERO,
            mvcc,
            commit,
        })
    }

    fn run_optimized(&self, block: &mut Block) -> Result<Stage> {
        let statedb = self.stores.statedb.as_ref();
        let t = Instant::now();
        let mut codes = syntactic_validate(block);
        let syntactic = t.elapsed();

        let (vscc_res, read_res) = {
            let block: &Block = block;
            let syntactic_codes = codes.clone();
            let codes = &mut codes;
            std::thread::scope(|s| {
                let reader = match self.cfg.backend {
                    BackendKind::SlowRemote => Some(s.spawn(move || {
                        let t = Instant::now();
                        let snap = build_snapshot_bulk(statedb, candidates(block, &syntactic_codes));
                        (snap, t.elapsed())
                    })),
                    BackendKind::FastEmbedded => None,
                };
                let t = Instant::now();
                let v = self.validator.validate(block, codes, statedb);
                let vscc_res = (v, t.elapsed());
                let read_res = reader.map(|h| h.join().expect("bulk read task panicked"));
                (vscc_res, read_res)
            })
        };
        let vscc_statedb_read = t.elapsed();
        vscc_res.0?;
        let vscc = syntactic + vscc_res.1;
        let (snapshot, statedb_read): (Option<ReadSnapshot>, Duration) = match read_res {
            Some((snap, d)) => (Some(snap?), d),
            None => (None, Duration::ZERO),
        };

        let t = Instant::now();
        mvcc_validate(block, &mut codes, snapshot.as_ref(), statedb)?;
        finalize(block, &codes);
        let mvcc = t.elapsed();

        let commit = commit_optimized(block, &self.cfg.commit_plan(), &self.stores)?;
        Ok(Stage {
            vscc,
            statedb_read,
            vscc_statedb_read,
            mvcc,
            commit,
        })
    }

    fn after_commit(&self, block: &Block) {
        if !self.cfg.vscc.cache_enabled {
            return;
        }
        for tx in block.transactions.iter().filter(|t| t.is_valid()) {
            for key in tx.write_set.keys().filter(|k| k.namespace == SYSTEM_NAMESPACE) {
                self.validator.cache().invalidate(&String::from_utf8_lossy(&key.name));
            }
        }
    }

    /// Replays missing blocks from the ledger into the databases and, once
    /// the stores agree, accepts blocks again.
    pub fn recover(&self) -> Result<ReconstructReport> {
        let report = reconstruct(&self.stores)?;
        if self.stores.heights()?.consistent() {
            self.needs_recovery.store(false, Ordering::Release);
        }
        Ok(report)
    }

    pub fn needs_recovery(&self) -> bool {
        self.needs_recovery.load(Ordering::Acquire)
    }

    /// Validates and commits the next block. Codes carried by the input
    /// block are ignored; the returned block carries the final ones.
    pub fn validate_and_commit(&self, mut block: Block) -> Result<BlockOutcome> {
        if self.in_flight.swap(true, Ordering::AcqRel) {
            return Err(Error::Protocol("another block is already in flight".into()));
        }
        let _guard = InFlight(&self.in_flight);
        let started = Instant::now();

        if self.needs_recovery.load(Ordering::Acquire) {
            let h = self.stores.heights()?;
            return Err(Error::NeedsRecovery {
                ledger: h.ledger,
                state: h.state,
                history: h.history,
            });
        }
        self.structural_check(&block)?;
        for tx in &mut block.transactions {
            tx.validation_code = ValidationCode::NotValidated;
        }

        let stage = match self.cfg.mode {
            Mode::Baseline => self.run_baseline(&mut block),
            Mode::Optimized => self.run_optimized(&mut block),
        };
        let stage = match stage {
            Ok(s) => s,
            Err(e) => {
                if matches!(e, Error::Commit { .. } | Error::LedgerBehind { .. }) {
                    self.needs_recovery.store(true, Ordering::Release);
                }
                return Err(e);
            }
        };
        self.after_commit(&block);
        let finished = Instant::now();

        let total_us = us(finished - started);
        let mut b = LatencyBreakdown {
            block_num: block.number,
            num_txs: block.transactions.len() as u64,
            num_valid: block.num_valid() as u64,
            vscc_us: us(stage.vscc),
            statedb_read_us: us(stage.statedb_read),
            mvcc_us: us(stage.mvcc),
            total_us,
            ..Default::default()
        };
        let named = match self.cfg.mode {
            Mode::Baseline => {
                b.ledger_write_us = us(stage.commit.ledger);
                b.statedb_write_us = us(stage.commit.statedb);
                b.vscc_us + b.statedb_read_us + b.mvcc_us + b.ledger_write_us + b.statedb_write_us
            }
            Mode::Optimized => {
                b.ledger_write_us = us(stage.commit.ledger_task);
                b.statedb_write_us = us(stage.commit.state_task);
                b.vscc_statedb_read_us = us(stage.vscc_statedb_read);
                b.ledger_statedb_write_us = us(stage.commit.wall);
                b.vscc_statedb_read_us + b.mvcc_us + b.ledger_statedb_write_us
            }
        };
        b.others_us = total_us.saturating_sub(named);
        debug_assert!(b.is_consistent(self.cfg.mode), "{b:?}");
        Ok(BlockOutcome {
            block,
            breakdown: b,
            started,
            finished,
        })
    }

    /// Processes `blocks` one at a time; the first failure ends the stream.
    pub fn run_stream(&self, blocks: impl IntoIterator<Item = Block>) -> Result<StreamReport> {
        let mut report = StreamReport::default();
        for block in blocks {
            let out = self.validate_and_commit(block)?;
            report.committed_txs += out.breakdown.num_txs;
            report.valid_txs += out.breakdown.num_valid;
            report.breakdowns.push(out.breakdown);
        }
        Ok(report)
    }
}

fn finalize(block: &mut Block, codes: &[ValidationCode]) {
    for (tx, c) in block.transactions.iter_mut().zip(codes) {
        debug_assert_ne!(*c, ValidationCode::NotValidated);
        tx.validation_code = *c;
    }
}
