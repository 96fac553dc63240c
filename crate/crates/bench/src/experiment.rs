//! Runs an experiment grid and writes the per-block CSV and the summary.

use std::fs::File;
use std::path::{Path, PathBuf};

use valphase::pipeline::throughput;
use valphase::{
    seed_genesis, BackendKind, LatencyBreakdown, Mode, Pipeline, PipelineConfig, StoreConfig, Stores, VsccConfig,
    Workload,
};

use crate::config::ExperimentSpec;
use crate::error::BenchError;

pub const CSV_HEADER: [&str; 17] = [
    "mode",
    "backend",
    "workers",
    "block_size",
    "rep",
    "block_num",
    "num_txs",
    "num_valid",
    "vscc_us",
    "statedb_read_us",
    "mvcc_us",
    "ledger_write_us",
    "statedb_write_us",
    "others_us",
    "vscc_statedb_read_us",
    "ledger_statedb_write_us",
    "total_us",
];

/// Latency columns, in CSV order.
pub const METRICS: [&str; 9] = [
    "vscc_us",
    "statedb_read_us",
    "mvcc_us",
    "ledger_write_us",
    "statedb_write_us",
    "others_us",
    "vscc_statedb_read_us",
    "ledger_statedb_write_us",
    "total_us",
];

/// One per-block CSV row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub mode: Mode,
    pub backend: BackendKind,
    pub workers: usize,
    pub block_size: usize,
    pub rep: usize,
    pub b: LatencyBreakdown,
}

impl Row {
    pub fn metrics(&self) -> [u64; 9] {
        let b = &self.b;
        [
            b.vscc_us,
            b.statedb_read_us,
            b.mvcc_us,
            b.ledger_write_us,
            b.statedb_write_us,
            b.others_us,
            b.vscc_statedb_read_us,
            b.ledger_statedb_write_us,
            b.total_us,
        ]
    }

    fn record(&self) -> Vec<String> {
        let mut out = vec![
            self.mode.to_string(),
            self.backend.to_string(),
            self.workers.to_string(),
            self.block_size.to_string(),
            self.rep.to_string(),
            self.b.block_num.to_string(),
            self.b.num_txs.to_string(),
            self.b.num_valid.to_string(),
        ];
        out.extend(self.metrics().iter().map(u64::to_string));
        out
    }

    fn from_record(r: &csv::StringRecord) -> Result<Row, String> {
        if r.len() != CSV_HEADER.len() {
            return Err(format!("expected {} fields, got {}", CSV_HEADER.len(), r.len()));
        }
        let n = |i: usize| -> Result<u64, String> {
            r[i].parse::<u64>()
                .map_err(|e| format!("{}: {e}", CSV_HEADER[i]))
        };
        Ok(Row {
            mode: r[0].parse()?,
            backend: r[1].parse()?,
            workers: n(2)? as usize,
            block_size: n(3)? as usize,
            rep: n(4)? as usize,
            b: LatencyBreakdown {
                block_num: n(5)?,
                num_txs: n(6)?,
                num_valid: n(7)?,
                vscc_us: n(8)?,
                statedb_read_us: n(9)?,
                mvcc_us: n(10)?,
                ledger_write_us: n(11)?,
                statedb_write_us: n(12)?,
                others_us: n(13)?,
                vscc_statedb_read_us: n(14)?,
                ledger_statedb_write_us: n(15)?,
                total_us: n(16)?,
            },
        })
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>, BenchError> {
    let mut rd = csv::Reader::from_path(path).map_err(BenchError::csv(path))?;
    let header = rd.headers().map_err(BenchError::csv(path))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Mismatch(format!("{}: unexpected header", path.display())));
    }
    rd.records()
        .map(|r| {
            let r = r.map_err(BenchError::csv(path))?;
            Row::from_record(&r).map_err(|m| BenchError::Mismatch(format!("{}: {m}", path.display())))
        })
        .collect()
}

/// Mean and sample standard deviation (0 for fewer than two values).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, stddev }
    }
}

/// Identifies a cell of the grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub backend: String,
    pub workers: usize,
    pub block_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub mode: Mode,
    pub backend: BackendKind,
    pub workers: usize,
    pub block_size: usize,
    pub reps: usize,
    pub blocks: usize,
    pub txs: u64,
    pub valid: u64,
    /// Per-block latency statistics, in `METRICS` order.
    pub latency: [Stat; 9],
    /// Per-repetition throughput statistics.
    pub throughput: Stat,
    pub error: Option<String>,
}

impl CellSummary {
    pub fn key(&self) -> CellKey {
        CellKey {
            backend: self.backend.to_string(),
            workers: self.workers,
            block_size: self.block_size,
        }
    }

    pub fn metric(&self, name: &str) -> Stat {
        let i = METRICS.iter().position(|m| *m == name).expect("known metric");
        self.latency[i]
    }

    /// Aggregates the rows of one cell; `reps` is the number requested.
    pub fn from_rows(
        mode: Mode,
        backend: BackendKind,
        workers: usize,
        block_size: usize,
        reps: usize,
        rows: &[Row],
        error: Option<String>,
    ) -> Self {
        let mut latency = [Stat::default(); 9];
        for (i, slot) in latency.iter_mut().enumerate() {
            let vals: Vec<f64> = rows.iter().map(|r| r.metrics()[i] as f64).collect();
            *slot = Stat::of(&vals);
        }
        let mut per_rep: std::collections::BTreeMap<usize, (u64, u64)> = Default::default();
        for r in rows {
            let e = per_rep.entry(r.rep).or_default();
            e.0 += r.b.num_txs;
            e.1 += r.b.total_us;
        }
        let tps: Vec<f64> = per_rep.values().map(|(t, us)| throughput(*t, *us)).collect();
        CellSummary {
            mode,
            backend,
            workers,
            block_size,
            reps,
            blocks: rows.len(),
            txs: rows.iter().map(|r| r.b.num_txs).sum(),
            valid: rows.iter().map(|r| r.b.num_valid).sum(),
            latency,
            throughput: Stat::of(&tps),
            error,
        }
    }
}

fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = ["mode", "backend", "workers", "block_size", "reps", "blocks", "txs", "valid"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in METRICS.iter().map(|m| m.to_string()).chain(["throughput".to_string()]) {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h.push("error".into());
    h
}

pub fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<(), BenchError> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(BenchError::csv(path))?;
    w.write_record(summary_header()).map_err(BenchError::csv(path))?;
    for c in cells {
        let mut rec = vec![
            c.mode.to_string(),
            c.backend.to_string(),
            c.workers.to_string(),
            c.block_size.to_string(),
            c.reps.to_string(),
            c.blocks.to_string(),
            c.txs.to_string(),
            c.valid.to_string(),
        ];
        for s in c.latency.iter().chain([&c.throughput]) {
            rec.push(s.mean.to_string());
            rec.push(s.stddev.to_string());
        }
        rec.push(c.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(BenchError::csv(path))?;
    }
    w.flush().map_err(BenchError::io(path))
}

pub fn read_summary(path: &Path) -> Result<Vec<CellSummary>, BenchError> {
    let mut rd = csv::Reader::from_path(path).map_err(BenchError::csv(path))?;
    let header = rd.headers().map_err(BenchError::csv(path))?.clone();
    let bad = |m: String| BenchError::Mismatch(format!("{}: {m}", path.display()));
    if header.iter().ne(summary_header().iter().map(String::as_str)) {
        return Err(bad("not a summary file".into()));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let r = rec.map_err(BenchError::csv(path))?;
        let int = |i: usize| r[i].parse::<u64>().map_err(|e| bad(format!("{}: {e}", &header[i])));
        let float = |i: usize| r[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", &header[i])));
        let stat = |i: usize| -> Result<Stat, BenchError> {
            Ok(Stat {
                mean: float(i)?,
                stddev: float(i + 1)?,
            })
        };
        let mut latency = [Stat::default(); 9];
        for (k, slot) in latency.iter_mut().enumerate() {
            *slot = stat(8 + 2 * k)?;
        }
        let error = &r[r.len() - 1];
        out.push(CellSummary {
            mode: r[0].parse().map_err(bad)?,
            backend: r[1].parse().map_err(bad)?,
            workers: int(2)? as usize,
            block_size: int(3)? as usize,
            reps: int(4)? as usize,
            blocks: int(5)? as usize,
            txs: int(6)?,
            valid: int(7)?,
            latency,
            throughput: stat(8 + 2 * METRICS.len())?,
            error: (!error.is_empty()).then(|| error.to_string()),
        });
    }
    Ok(out)
}

fn create_parent(path: &Path) -> Result<(), BenchError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(BenchError::io(p)),
        _ => Ok(()),
    }
}

/// Runs one repetition on fresh stores and returns its rows.
pub fn run_rep(
    spec: &ExperimentSpec,
    workers: usize,
    block_size: usize,
    workload: &Workload,
    rep: usize,
) -> Result<Vec<Row>, BenchError> {
    let dir = match &spec.data_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(BenchError::io(d))?;
            tempfile::Builder::new().prefix("valphase-").tempdir_in(d)
        }
        None => tempfile::Builder::new().prefix("valphase-").tempdir(),
    }
    .map_err(BenchError::io(spec.data_dir.clone().unwrap_or_else(std::env::temp_dir)))?;

    let store_cfg = StoreConfig {
        backend: spec.backend,
        latency: spec.latency,
        disk: spec.disk(),
        service_threads: spec.service_threads,
        ..StoreConfig::new(spec.backend)
    };
    let stores = Stores::open(dir.path(), &store_cfg)?;
    seed_genesis(&stores, &workload.genesis)?;
    let mut cfg = PipelineConfig::new(spec.mode, spec.backend);
    cfg.vscc = VsccConfig {
        workers,
        verification_cost_us: spec.verification_cost_us,
        cache_enabled: spec.cache_enabled(),
        clear_policy: spec.cache_policy,
    };
    cfg.ledger_retry_limit = spec.ledger_retry_limit;
    cfg.block_size = block_size;
    let pipeline = Pipeline::new(cfg, stores)?;
    let report = pipeline.run_stream(workload.blocks.iter().cloned())?;
    drop(pipeline);
    Ok(report
        .breakdowns
        .into_iter()
        .map(|b| Row {
            mode: spec.mode,
            backend: spec.backend,
            workers,
            block_size,
            rep,
            b,
        })
        .collect())
}

/// Output of `run_experiment`.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub csv: PathBuf,
    pub summary_path: PathBuf,
    pub rows: Vec<Row>,
    pub cells: Vec<CellSummary>,
}

impl ExperimentResult {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Runs every (block size, workers, repetition) of `spec` in sequence on
/// fresh stores, writing rows as each repetition finishes. A failing
/// repetition aborts its cell; the error is kept in the summary and the
/// remaining cells still run. `progress` is told about each finished cell.
pub fn run_experiment(
    spec: &ExperimentSpec,
    mut progress: impl FnMut(&CellSummary),
) -> Result<ExperimentResult, BenchError> {
    spec.check().map_err(|msg| BenchError::Config { line: 0, msg })?;
    let csv_path = spec.out.clone();
    create_parent(&csv_path)?;
    let file = File::create(&csv_path).map_err(BenchError::io(&csv_path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER).map_err(BenchError::csv(&csv_path))?;

    let mut all_rows = Vec::new();
    let mut cells = Vec::new();
    for &block_size in &spec.block_sizes {
        let mut wcfg = spec.workload.clone();
        wcfg.block_size = block_size;
        let workload = Workload::generate(&wcfg)?;
        for &workers in &spec.workers {
            let mut rows = Vec::new();
            let mut error = None;
            for rep in 0..spec.reps {
                match run_rep(spec, workers, block_size, &workload, rep) {
                    Ok(r) => {
                        for row in &r {
                            w.write_record(row.record()).map_err(BenchError::csv(&csv_path))?;
                        }
                        w.flush().map_err(BenchError::io(&csv_path))?;
                        rows.extend(r);
                    }
                    Err(e) => {
                        error = Some(format!("rep {rep}: {e}"));
                        break;
                    }
                }
            }
            let cell = CellSummary::from_rows(spec.mode, spec.backend, workers, block_size, spec.reps, &rows, error);
            progress(&cell);
            cells.push(cell);
            all_rows.extend(rows);
        }
    }
    let summary_path = spec.summary_path();
    write_summary(&summary_path, &cells)?;
    Ok(ExperimentResult {
        csv: csv_path,
        summary_path,
        rows: all_rows,
        cells,
    })
}
