//! Durable commit of a finalized block to the ledger, state database, and
//! history database, and local reconstruction after a failed commit.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{CommitStep, Error, Result};
use crate::statedb::BackendKind;
use crate::stores::Stores;
use crate::types::Block;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every stage runs one after the other.
    Baseline,
    /// vscc overlaps the bulk read and the commit writes overlap each other.
    Optimized,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Optimized => "optimized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "original" | "sequential" => Ok(Mode::Baseline),
            "optimized" | "optimised" | "parallel" => Ok(Mode::Optimized),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Where the history write goes in the overlapped commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistoryPlacement {
    /// After the state write, on the state task (fast state databases).
    AfterStateDb,
    /// After the ledger write, on the ledger task (slow state databases).
    WithLedger,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitPlan {
    pub mode: Mode,
    pub backend: BackendKind,
    /// Total ledger write attempts in optimized mode.
    pub ledger_retry_limit: u32,
    pub retry_backoff: Duration,
}

impl CommitPlan {
    pub fn new(mode: Mode, backend: BackendKind) -> Self {
        CommitPlan {
            mode,
            backend,
            ledger_retry_limit: 3,
            retry_backoff: Duration::from_millis(10),
        }
    }

    pub fn history_placement(&self) -> HistoryPlacement {
        match self.backend {
            BackendKind::FastEmbedded => HistoryPlacement::AfterStateDb,
            BackendKind::SlowRemote => HistoryPlacement::WithLedger,
        }
    }
}

/// Where the time of one commit went.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommitTimings {
    pub ledger: Duration,
    pub statedb: Duration,
    pub history: Duration,
    /// Ledger-side task of the overlapped commit (includes history when
    /// placed with the ledger); equals `ledger` in baseline.
    pub ledger_task: Duration,
    /// State-side task of the overlapped commit; equals `statedb` in baseline.
    pub state_task: Duration,
    pub wall: Duration,
    pub ledger_attempts: u32,
}

fn step_err(block: &Block, step: CommitStep) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Commit {
        number: block.number,
        step,
        source: Box::new(e),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

/// Ledger, then state database, then history; each finishes before the
/// next begins. Stops at the first failure.
pub fn commit_baseline(block: &Block, stores: &Stores) -> Result<CommitTimings> {
    let start = Instant::now();
    let (r, ledger) = timed(|| stores.ledger.append_block(block));
    r.map_err(step_err(block, CommitStep::Ledger))?;
    let writes = block.valid_writes();
    let (r, statedb) = timed(|| stores.statedb.apply_write_batch(block.number, &writes));
    r.map_err(step_err(block, CommitStep::StateDb))?;
    let (r, history) = timed(|| stores.history.append_history(block));
    r.map_err(step_err(block, CommitStep::History))?;
    Ok(CommitTimings {
        ledger,
        statedb,
        history,
        ledger_task: ledger,
        state_task: statedb,
        wall: start.elapsed(),
        ledger_attempts: 1,
    })
}

fn append_with_retry(block: &Block, plan: &CommitPlan, stores: &Stores) -> (Result<()>, u32) {
    let limit = plan.ledger_retry_limit.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match stores.ledger.append_block(block) {
            Ok(()) => return (Ok(()), attempt),
            Err(e @ Error::Storage(_)) if attempt < limit => {
                log::warn!(
                    "ledger write of block {} failed (attempt {attempt}/{limit}): {e}",
                    block.number
                );
                std::thread::sleep(plan.retry_backoff);
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

#[derive(Default)]
struct SideOutcome {
    primary: Option<Result<()>>,
    history: Option<Result<()>>,
    primary_time: Duration,
    history_time: Duration,
    task_time: Duration,
}

/// Ledger and state writes run as two concurrent tasks; the history write
/// follows whichever of them `plan` places it with. A failed ledger write
/// is retried up to `plan.ledger_retry_limit` attempts.
pub fn commit_optimized(block: &Block, plan: &CommitPlan, stores: &Stores) -> Result<CommitTimings> {
    let placement = plan.history_placement();
    let writes = block.valid_writes();
    let start = Instant::now();
    let ((ledger_side, attempts), state_side) = std::thread::scope(|s| {
        let ledger_task = s.spawn(|| {
            let t = Instant::now();
            let mut out = SideOutcome::default();
            let ((r, attempts), d) = timed(|| append_with_retry(block, plan, stores));
            out.primary_time = d;
            let ok = r.is_ok();
            out.primary = Some(r);
            if ok && placement == HistoryPlacement::WithLedger {
                let (r, d) = timed(|| stores.history.append_history(block));
                out.history = Some(r);
                out.history_time = d;
            }
            out.task_time = t.elapsed();
            (out, attempts)
        });

        let t = Instant::now();
        let mut state = SideOutcome::default();
        let (r, d) = timed(|| stores.statedb.apply_write_batch(block.number, &writes));
        state.primary_time = d;
        let ok = r.is_ok();
        state.primary = Some(r);
        if ok && placement == HistoryPlacement::AfterStateDb {
            let (r, d) = timed(|| stores.history.append_history(block));
            state.history = Some(r);
            state.history_time = d;
        }
        state.task_time = t.elapsed();
        let ledger = ledger_task.join().expect("ledger commit task panicked");
        (ledger, state)
    });
    let wall = start.elapsed();

    let ledger_result = ledger_side.primary.expect("ledger task ran");
    let state_result = state_side.primary.expect("state task ran");
    match (ledger_result, state_result) {
        (Err(_), Ok(())) => {
            return Err(Error::LedgerBehind {
                ledger: stores.ledger.height(),
                savepoint: stores.statedb.get_savepoint()?,
            })
        }
        (Err(e), Err(_)) => return Err(step_err(block, CommitStep::Ledger)(e)),
        (Ok(()), Err(e)) => return Err(step_err(block, CommitStep::StateDb)(e)),
        (Ok(()), Ok(())) => {}
    }
    for h in [ledger_side.history, state_side.history].into_iter().flatten() {
        h.map_err(step_err(block, CommitStep::History))?;
    }
    Ok(CommitTimings {
        ledger: ledger_side.primary_time,
        statedb: state_side.primary_time,
        history: ledger_side.history_time + state_side.history_time,
        ledger_task: ledger_side.task_time,
        state_task: state_side.task_time,
        wall,
        ledger_attempts: attempts,
    })
}

pub fn commit(block: &Block, plan: &CommitPlan, stores: &Stores) -> Result<CommitTimings> {
    match plan.mode {
        Mode::Baseline => commit_baseline(block, stores),
        Mode::Optimized => commit_optimized(block, plan, stores),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReconstructReport {
    /// Blocks replayed into the state database.
    pub state_blocks: u64,
    /// Blocks replayed into the history database.
    pub history_blocks: u64,
}

/// Brings the state and history databases up to the ledger by replaying
/// the valid transactions of the blocks they are missing.
///
/// A database ahead of the ledger cannot be repaired from local data.
pub fn reconstruct(stores: &Stores) -> Result<ReconstructReport> {
    let h = stores.heights()?;
    if h.state > h.ledger || h.history > h.ledger {
        return Err(Error::Unrepairable {
            ledger: h.ledger,
            state: h.state,
            history: h.history,
        });
    }
    let Some(top) = h.ledger else {
        return Ok(ReconstructReport::default());
    };
    let mut report = ReconstructReport::default();
    let first_state = h.state.map_or(0, |s| s + 1);
    let first_history = h.history.map_or(0, |s| s + 1);
    for n in first_state.min(first_history)..=top {
        let block = stores.ledger.get_block(n)?;
        if n >= first_state {
            stores
                .statedb
                .apply_write_batch(n, &block.valid_writes())?;
            report.state_blocks += 1;
        }
        if n >= first_history {
            stores.history.append_history(&block)?;
            report.history_blocks += 1;
        }
    }
    if report != ReconstructReport::default() {
        log::info!(
            "reconstructed {} state and {} history blocks up to {top}",
            report.state_blocks,
            report.history_blocks
        );
    }
    Ok(report)
}
