//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. `ACCEPTANCE_ONLY=4,5` restricts the run to the listed criteria.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use valphase::mvcc::{build_snapshot_bulk, mvcc_validate};
use valphase::statedb::EmbeddedStateDb;
use valphase::vscc::{syntactic_validate, Validator};
use valphase::{
    seed_genesis, BackendKind, Block, CachePolicy, Digest, DiskConfig, EndorsementPolicy, Error, Key, Mode, Pipeline,
    PipelineConfig, ReadSet, StateDb, StoreConfig, Stores, Transaction, ValidationCode, Version, VsccConfig, Workload,
    WorkloadConfig, WriteSet,
};
use valphase_bench::experiment::read_rows;
use valphase_bench::{read_summary, run_experiment, CellSummary, ExperimentSpec, Row, Stat, METRICS};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn open(dir: &Path, cfg: &StoreConfig) -> Stores {
    Stores::open(dir, cfg).expect("open stores")
}

type Dump = (Vec<u8>, Vec<(Vec<u8>, Vec<u8>)>, Vec<(Vec<u8>, Vec<u8>)>);

fn dump(s: &Stores) -> Dump {
    (s.ledger.file_bytes().unwrap(), s.statedb.dump().unwrap(), s.history.dump())
}

// ---------------------------------------------------------------------------
// 1. differential equivalence

struct Run {
    codes: Vec<Vec<ValidationCode>>,
    dump: Dump,
}

fn run_stream(mode: Mode, backend: BackendKind, w: &Workload) -> Result<Run, String> {
    let dir = tempfile::tempdir().unwrap();
    let stores = open(dir.path(), &StoreConfig::in_memory_speed(backend));
    seed_genesis(&stores, &w.genesis).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::new(mode, backend);
    cfg.vscc.workers = 4;
    cfg.vscc.cache_enabled = mode == Mode::Optimized;
    let p = Pipeline::new(cfg, stores.clone()).map_err(|e| e.to_string())?;
    let mut codes = Vec::with_capacity(w.blocks.len());
    for b in &w.blocks {
        let out = p.validate_and_commit(b.clone()).map_err(|e| e.to_string())?;
        codes.push(out.block.codes());
    }
    Ok(Run {
        codes,
        dump: dump(&stores),
    })
}

fn equivalence() -> Outcome {
    let probs = [0.0, 0.02, 0.2];
    let streams = 21;
    let mut txs = 0;
    let mut invalid: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..streams {
        let cfg = WorkloadConfig {
            total_txs: 10_000,
            block_size: [25, 50, 100][i % 3],
            num_accounts: 2_000,
            seed: 1_000 + i as u64,
            conflict_prob: probs[i % 3],
            policy_failure_prob: 0.02,
            unknown_chaincode_prob: 0.01,
            upgrade_prob: if i % 2 == 0 { 0.005 } else { 0.0 },
            num_chaincodes: 1 + i % 3,
            ..Default::default()
        };
        let w = Workload::generate(&cfg).map_err(|e| e.to_string())?;
        txs += w.num_txs();
        for backend in [BackendKind::FastEmbedded, BackendKind::SlowRemote] {
            let a = run_stream(Mode::Baseline, backend, &w)?;
            let b = run_stream(Mode::Optimized, backend, &w)?;
            let ctx = format!("stream {i} (p={}) on {backend}", cfg.conflict_prob);
            ensure(a.codes == b.codes, || format!("{ctx}: validation codes differ"))?;
            ensure(a.dump.0 == b.dump.0, || format!("{ctx}: ledger bytes differ"))?;
            ensure(a.dump.1 == b.dump.1, || format!("{ctx}: state contents differ"))?;
            ensure(a.dump.2 == b.dump.2, || format!("{ctx}: history contents differ"))?;
            if backend == BackendKind::FastEmbedded {
                for c in a.codes.iter().flatten() {
                    let name = match c {
                        ValidationCode::MvccConflict => "mvcc",
                        ValidationCode::PolicyFailure => "policy",
                        ValidationCode::UnknownChaincode => "unknown",
                        ValidationCode::BadSyntax => "syntax",
                        _ => continue,
                    };
                    *invalid.entry(name).or_default() += 1;
                }
            }
        }
    }
    for kind in ["mvcc", "policy", "unknown"] {
        ensure(invalid.get(kind).copied().unwrap_or(0) > 0, || format!("no {kind} invalidations generated"))?;
    }
    Ok(format!(
        "{streams} streams, {txs} txs, both backends; identical codes, ledger, state, history; invalid {invalid:?}"
    ))
}

// ---------------------------------------------------------------------------
// 2. mvcc against serial application

/// Serially applies the candidates against a copy of the committed state.
/// A written key, deleted or not, carries the version of its writer.
fn mvcc_oracle(
    committed: &HashMap<Key, Version>,
    height: u64,
    txs: &[Transaction],
    pre: &[ValidationCode],
) -> Vec<ValidationCode> {
    let mut state: HashMap<Key, Option<Version>> = committed.iter().map(|(k, v)| (k.clone(), Some(*v))).collect();
    let mut out = pre.to_vec();
    for (i, tx) in txs.iter().enumerate() {
        if pre[i] != ValidationCode::NotValidated {
            continue;
        }
        let ok = tx.read_set.entries.iter().all(|r| state.get(&r.key).copied().flatten() == r.version);
        if ok {
            out[i] = ValidationCode::Valid;
            for w in &tx.write_set.entries {
                state.insert(w.key.clone(), Some(Version::new(height, i as u32)));
            }
        } else {
            out[i] = ValidationCode::MvccConflict;
        }
    }
    out
}

fn mvcc_random() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let dir = tempfile::tempdir().unwrap();
    let db = EmbeddedStateDb::open(dir.path(), DiskConfig::volatile()).map_err(|e| e.to_string())?;
    let keys: Vec<Key> = (0..6).map(|i| Key::new("acc", format!("k{i}"))).collect();
    let mut committed: HashMap<Key, Version> = HashMap::new();
    let blocks = 12_000u64;
    let mut tally = [0usize; 2];
    for height in 1..=blocks {
        let n = rng.gen_range(1..=8);
        let mut txs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        for t in 0..n {
            let mut rs = ReadSet::default();
            let mut ws = WriteSet::default();
            let reads = rng.gen_range(0..=3);
            let read_keys: Vec<&Key> = keys.choose_multiple(&mut rng, reads).collect();
            for k in read_keys {
                let current = committed.get(k).copied();
                let version = match rng.gen_range(0..10) {
                    0 => None,
                    1 => Some(Version::new(rng.gen_range(0..height), rng.gen_range(0..8))),
                    _ => current,
                };
                rs.push(k.clone(), version);
            }
            let writes = rng.gen_range(0..=3);
            let write_keys: Vec<&Key> = keys.choose_multiple(&mut rng, writes).collect();
            for k in write_keys {
                if rng.gen_bool(0.15) {
                    ws.delete(k.clone());
                } else {
                    ws.put(k.clone(), vec![t as u8]);
                }
            }
            txs.push(Transaction {
                tx_id: format!("{height}-{t}"),
                chaincode_id: "acc".into(),
                payload: Vec::new(),
                read_set: rs,
                write_set: ws,
                endorsements: Vec::new(),
                validation_code: ValidationCode::NotValidated,
            });
            pre.push(if rng.gen_bool(0.2) {
                ValidationCode::PolicyFailure
            } else {
                ValidationCode::NotValidated
            });
        }
        let want = mvcc_oracle(&committed, height, &txs, &pre);
        let mut block = Block {
            number: height,
            prev_hash: Digest::ZERO,
            data_hash: Digest::ZERO,
            transactions: txs,
        };

        let mut direct = pre.clone();
        mvcc_validate(&block, &mut direct, None, &db).map_err(|e| e.to_string())?;
        // The snapshot covers every transaction, a superset of the candidates.
        let snap = build_snapshot_bulk(&db, &block.transactions).map_err(|e| e.to_string())?;
        let mut snapped = pre.clone();
        mvcc_validate(&block, &mut snapped, Some(&snap), &db).map_err(|e| e.to_string())?;
        ensure(direct == want, || format!("block {height}: direct {direct:?} != oracle {want:?}"))?;
        ensure(snapped == want, || format!("block {height}: snapshot {snapped:?} != oracle {want:?}"))?;

        for (tx, c) in block.transactions.iter_mut().zip(&want) {
            tx.validation_code = *c;
            tally[(*c == ValidationCode::Valid) as usize] += 1;
        }
        db.apply_write_batch(height, &block.valid_writes()).map_err(|e| e.to_string())?;
        for (i, ws) in block.valid_writes() {
            for w in &ws.entries {
                match w.value {
                    Some(_) => committed.insert(w.key.clone(), Version::new(height, i)),
                    None => committed.remove(&w.key),
                };
            }
        }
    }
    Ok(format!(
        "{blocks} blocks, direct and snapshot modes; {} valid, {} not valid",
        tally[1], tally[0]
    ))
}

// ---------------------------------------------------------------------------
// 3. policy truth tables

fn random_policy(rng: &mut ChaCha8Rng, orgs: &[String], depth: usize) -> EndorsementPolicy {
    if depth == 1 || rng.gen_bool(0.3) {
        return EndorsementPolicy::signed_by(orgs.choose(rng).unwrap().clone());
    }
    let children: Vec<_> = (0..rng.gen_range(1..=4)).map(|_| random_policy(rng, orgs, depth - 1)).collect();
    match rng.gen_range(0..3) {
        0 => EndorsementPolicy::And(children),
        1 => EndorsementPolicy::Or(children),
        _ => EndorsementPolicy::OutOf(rng.gen_range(0..=children.len()), children),
    }
}

/// Truth table as a bit vector over subsets: bit `s` is set iff subset `s`
/// (bit `i` of `s` = org `i` endorsed) satisfies the policy.
fn truth_table(p: &EndorsementPolicy, orgs: &[String]) -> u64 {
    let subsets = 1u32 << orgs.len();
    let all = if subsets == 64 { u64::MAX } else { (1u64 << subsets) - 1 };
    match p {
        EndorsementPolicy::SignedBy(o) => {
            let i = orgs.iter().position(|x| x == o).unwrap();
            (0..subsets).filter(|s| s >> i & 1 == 1).fold(0, |t, s| t | 1 << s)
        }
        EndorsementPolicy::And(c) => c.iter().fold(all, |t, x| t & truth_table(x, orgs)),
        EndorsementPolicy::Or(c) => c.iter().fold(0, |t, x| t | truth_table(x, orgs)),
        EndorsementPolicy::OutOf(m, c) => {
            let tables: Vec<u64> = c.iter().map(|x| truth_table(x, orgs)).collect();
            (0..subsets)
                .filter(|s| tables.iter().filter(|t| *t >> s & 1 == 1).count() >= *m)
                .fold(0, |t, s| t | 1 << s)
        }
    }
}

fn policy_tables() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb001);
    let trees = 5_000;
    let mut evaluations = 0u64;
    let mut satisfied = 0u64;
    for n in 0..trees {
        let k = rng.gen_range(1..=6);
        let orgs: Vec<String> = (0..k).map(|i| format!("Org{i}")).collect();
        let depth = rng.gen_range(1..=4);
        let p = random_policy(&mut rng, &orgs, depth);
        ensure(p.depth() <= 4 && p.check().is_ok(), || format!("tree {n}: generator produced {p:?}"))?;
        let table = truth_table(&p, &orgs);
        for s in 0..1u32 << k {
            let set: BTreeSet<&str> = (0..k).filter(|i| s >> i & 1 == 1).map(|i| orgs[i].as_str()).collect();
            let want = table >> s & 1 == 1;
            ensure(p.evaluate(&set) == want, || format!("tree {n} {p}: subset {set:?} expected {want}"))?;
            evaluations += 1;
            satisfied += want as u64;
        }
    }
    Ok(format!(
        "{trees} trees over up to 6 orgs, depth <= 4; {evaluations} subsets, {satisfied} satisfied"
    ))
}

// ---------------------------------------------------------------------------
// 4-7, 9. measured experiments

struct Measured {
    slow_base: ExperimentSet,
    slow_opt: ExperimentSet,
    fast_base: ExperimentSet,
    fast_opt: ExperimentSet,
}

struct ExperimentSet {
    cell: CellSummary,
    rows: Vec<Row>,
    csv: std::path::PathBuf,
    summary: std::path::PathBuf,
}

fn experiment(out: &Path, mode: Mode, backend: BackendKind, block_size: usize, total_txs: usize) -> ExperimentSet {
    let spec = ExperimentSpec {
        mode,
        backend,
        workers: vec![16],
        block_sizes: vec![block_size],
        reps: 3,
        workload: WorkloadConfig {
            total_txs,
            ..Default::default()
        },
        out: out.join(format!("{}_{}_{block_size}.csv", backend, mode)),
        data_dir: Some(out.join("data")),
        ..Default::default()
    };
    let started = Instant::now();
    let res = run_experiment(&spec, |_| {}).unwrap_or_else(|e| panic!("{mode} {backend}: {e}"));
    let cell = res.cells.into_iter().next().unwrap();
    if let Some(e) = &cell.error {
        panic!("{mode} {backend}: {e}");
    }
    eprintln!(
        "  ran {mode} {backend} block {block_size}: {:.1} tx/s over {} blocks in {:.1?}",
        cell.throughput.mean,
        cell.blocks,
        started.elapsed()
    );
    ExperimentSet {
        cell,
        rows: res.rows,
        csv: res.csv,
        summary: res.summary_path,
    }
}

fn measure(out: &Path) -> Measured {
    Measured {
        slow_base: experiment(out, Mode::Baseline, BackendKind::SlowRemote, 50, 10_000),
        slow_opt: experiment(out, Mode::Optimized, BackendKind::SlowRemote, 50, 10_000),
        fast_base: experiment(out, Mode::Baseline, BackendKind::FastEmbedded, 200, 20_000),
        fast_opt: experiment(out, Mode::Optimized, BackendKind::FastEmbedded, 200, 20_000),
    }
}

fn mean(s: &ExperimentSet, metric: &str) -> f64 {
    s.cell.metric(metric).mean
}

fn slow_speedup(m: &Measured) -> Outcome {
    let ratio = m.slow_opt.cell.throughput.mean / m.slow_base.cell.throughput.mean;
    let line = format!(
        "slow_remote block 50 workers 16: {:.1} -> {:.1} tx/s, ratio {ratio:.2} (need >= 1.5)",
        m.slow_base.cell.throughput.mean, m.slow_opt.cell.throughput.mean
    );
    if ratio >= 1.5 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn cache_effect(m: &Measured) -> Outcome {
    let base = mean(&m.slow_base, "vscc_us");
    let opt = mean(&m.slow_opt, "vscc_us");
    let line = format!(
        "mean vscc_us {base:.0} -> {opt:.0}, ratio {:.3} (need <= 0.5)",
        opt / base
    );
    if opt <= 0.5 * base {
        Ok(line)
    } else {
        Err(line)
    }
}

fn fast_speedup(m: &Measured) -> Outcome {
    let ratio = m.fast_opt.cell.throughput.mean / m.fast_base.cell.throughput.mean;
    let commit = mean(&m.fast_opt, "ledger_statedb_write_us");
    let serial = mean(&m.fast_base, "ledger_write_us")
        + mean(&m.fast_base, "statedb_write_us")
        + mean(&m.fast_base, "others_us");
    let line = format!(
        "fast_embedded block 200 workers 16: {:.1} -> {:.1} tx/s, ratio {ratio:.2} (need >= 1.15); \
         commit {commit:.0} us vs {serial:.0} us serial, ratio {:.3} (need <= 0.85)",
        m.fast_base.cell.throughput.mean,
        m.fast_opt.cell.throughput.mean,
        commit / serial
    );
    if ratio >= 1.15 && commit <= 0.85 * serial {
        Ok(line)
    } else {
        Err(line)
    }
}

fn overlap_bound(m: &Measured) -> Outcome {
    let overlapped = mean(&m.slow_opt, "vscc_statedb_read_us");
    let serial = mean(&m.slow_base, "vscc_us") + mean(&m.slow_base, "statedb_read_us");
    let floor = mean(&m.slow_opt, "vscc_us").max(mean(&m.slow_opt, "statedb_read_us"));
    let line = format!(
        "overlapped {overlapped:.0} us, baseline vscc+read {serial:.0} us, component max {floor:.0} us"
    );
    if overlapped < serial && overlapped >= floor {
        Ok(line)
    } else {
        Err(line)
    }
}

fn component_sum(r: &Row) -> u64 {
    let b = &r.b;
    match r.mode {
        Mode::Baseline => {
            b.vscc_us + b.statedb_read_us + b.mvcc_us + b.ledger_write_us + b.statedb_write_us + b.others_us
        }
        Mode::Optimized => b.vscc_statedb_read_us + b.mvcc_us + b.ledger_statedb_write_us + b.others_us,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn accounting(m: &Measured) -> Outcome {
    let mut rows = 0;
    let mut worst = 0.0f64;
    for set in [&m.slow_base, &m.slow_opt, &m.fast_base, &m.fast_opt] {
        let from_csv = read_rows(&set.csv).map_err(|e| e.to_string())?;
        ensure(from_csv == set.rows, || format!("{}: rows on disk differ from the run", set.csv.display()))?;
        for r in &from_csv {
            let sum = component_sum(r) as f64;
            let total = r.b.total_us as f64;
            let err = if total == 0.0 { sum } else { (sum - total).abs() / total };
            worst = worst.max(err);
            ensure(err <= 0.01, || format!("{:?} block {}: components {sum} vs total {total}", r.mode, r.b.block_num))?;
            rows += 1;
        }

        // The summary must agree with statistics recomputed from the CSV.
        let cell = read_summary(&set.summary).map_err(|e| e.to_string())?.remove(0);
        for (i, name) in METRICS.iter().enumerate() {
            let vals: Vec<f64> = from_csv.iter().map(|r| r.metrics()[i] as f64).collect();
            let want = sample_stat(&vals);
            let got = cell.metric(name);
            ensure(close(got.mean, want.mean) && close(got.stddev, want.stddev), || {
                format!("{}: {name} summary {got:?} vs recomputed {want:?}", set.summary.display())
            })?;
        }
        let mut per_rep: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for r in &from_csv {
            let e = per_rep.entry(r.rep).or_default();
            e.0 += r.b.num_txs as f64;
            e.1 += r.b.total_us as f64;
        }
        let tps: Vec<f64> = per_rep.values().map(|(t, us)| t / us * 1e6).collect();
        let want = sample_stat(&tps);
        ensure(close(cell.throughput.mean, want.mean) && close(cell.throughput.stddev, want.stddev), || {
            format!("{}: throughput {:?} vs recomputed {want:?}", set.summary.display(), cell.throughput)
        })?;
    }
    Ok(format!(
        "{rows} rows within 1% (worst {:.4}%); summaries match recomputation",
        worst * 100.0
    ))
}

fn sample_stat(v: &[f64]) -> Stat {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Stat {
        mean,
        stddev: var.sqrt(),
    }
}

// ---------------------------------------------------------------------------
// 8. recovery

fn replay(s: &Stores) -> Dump {
    let dir = tempfile::tempdir().unwrap();
    let fresh = open(dir.path(), &StoreConfig::in_memory_speed(BackendKind::FastEmbedded));
    if let Some(h) = s.ledger.height() {
        for n in 0..=h {
            let b = s.ledger.get_block(n).unwrap();
            fresh.ledger.append_block(&b).unwrap();
            fresh.statedb.apply_write_batch(n, &b.valid_writes()).unwrap();
            fresh.history.append_history(&b).unwrap();
        }
    }
    dump(&fresh)
}

#[derive(Clone, Copy, Debug)]
enum Fault {
    Ledger,
    StateDb,
    History,
}

fn recovery() -> Outcome {
    let w = Workload::generate(&WorkloadConfig {
        total_txs: 1_200,
        block_size: 40,
        num_accounts: 300,
        seed: 21,
        conflict_prob: 0.1,
        policy_failure_prob: 0.03,
        unknown_chaincode_prob: 0.02,
        upgrade_prob: 0.01,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut cases = 0;
    for backend in [BackendKind::FastEmbedded, BackendKind::SlowRemote] {
        let store_cfg = StoreConfig::in_memory_speed(backend);
        let pipeline = |mode: Mode, s: Stores| {
            let mut cfg = PipelineConfig::new(mode, backend);
            cfg.vscc.workers = 4;
            cfg.retry_backoff = Duration::from_millis(1);
            Pipeline::new(cfg, s).unwrap()
        };
        let dir = tempfile::tempdir().unwrap();
        let clean = open(dir.path(), &store_cfg);
        seed_genesis(&clean, &w.genesis).unwrap();
        pipeline(Mode::Baseline, clean.clone())
            .run_stream(w.blocks.clone())
            .map_err(|e| e.to_string())?;
        let want = dump(&clean);

        for mode in [Mode::Baseline, Mode::Optimized] {
            for fault in [Fault::Ledger, Fault::StateDb, Fault::History] {
                for at in [0, 11, w.blocks.len() - 1] {
                    let ctx = format!("{backend} {mode} {fault:?} at block {}", at + 1);
                    let dir = tempfile::tempdir().unwrap();
                    let s = open(dir.path(), &store_cfg);
                    seed_genesis(&s, &w.genesis).unwrap();
                    let p = pipeline(mode, s.clone());
                    for b in &w.blocks[..at] {
                        p.validate_and_commit(b.clone()).map_err(|e| format!("{ctx}: {e}"))?;
                    }
                    match fault {
                        Fault::Ledger => s.ledger.failpoint().fail_next(1),
                        Fault::StateDb => s.statedb.failpoint().fail_next(1),
                        Fault::History => s.history.failpoint().fail_next(1),
                    }
                    match p.validate_and_commit(w.blocks[at].clone()) {
                        Ok(_) | Err(Error::Commit { .. }) | Err(Error::LedgerBehind { .. }) => {}
                        Err(e) => return Err(format!("{ctx}: unexpected error {e}")),
                    }
                    p.recover().map_err(|e| format!("{ctx}: recover: {e}"))?;
                    ensure(s.heights().unwrap().consistent(), || format!("{ctx}: heights differ after recovery"))?;
                    ensure(dump(&s) == replay(&s), || format!("{ctx}: recovered stores differ from replay"))?;
                    // Block n sits at index n - 1; continue after whatever the ledger kept.
                    let rest = s.ledger.height().unwrap() as usize;
                    ensure(rest == at || rest == at + 1, || format!("{ctx}: ledger height {rest}"))?;
                    for b in &w.blocks[rest..] {
                        p.validate_and_commit(b.clone()).map_err(|e| format!("{ctx}: {e}"))?;
                    }
                    ensure(dump(&s) == want, || format!("{ctx}: end state differs from the fault-free run"))?;
                    cases += 1;
                }
            }
        }
    }
    Ok(format!(
        "{cases} fault cases (ledger, statedb, history x both modes x both backends); all equal fresh replay"
    ))
}

// ---------------------------------------------------------------------------
// 10. chaincode definition reads

fn cache_reads() -> Outcome {
    let w = Workload::generate(&WorkloadConfig {
        total_txs: 400,
        block_size: 200,
        num_accounts: 500,
        num_chaincodes: 1,
        conflict_prob: 0.0,
        seed: 9,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut cold = Vec::new();
    let mut warm = Vec::new();
    for trial in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let s = open(dir.path(), &StoreConfig::new(BackendKind::SlowRemote));
        seed_genesis(&s, &w.genesis).unwrap();
        let v = Validator::new(VsccConfig {
            workers: 16,
            verification_cost_us: 0,
            cache_enabled: true,
            clear_policy: CachePolicy::OnUpgrade,
        })
        .map_err(|e| e.to_string())?;
        for (i, block) in w.blocks.iter().enumerate() {
            ensure(block.transactions.len() == 200, || "block is not 200 txs".into())?;
            let mut codes = syntactic_validate(block);
            let before = s.statedb.stats().snapshot();
            v.validate(block, &mut codes, s.statedb.as_ref()).map_err(|e| e.to_string())?;
            let reads = (s.statedb.stats().snapshot() - before).system_gets;
            ensure(codes.iter().all(|c| *c == ValidationCode::NotValidated), || {
                format!("trial {trial} block {i}: vscc rejected transactions")
            })?;
            if i == 0 { &mut cold } else { &mut warm }.push(reads);
        }
    }
    let line = format!("system-namespace reads per 200-tx block: cold {cold:?}, warm {warm:?}");
    if cold.iter().all(|r| *r == 1) && warm.iter().all(|r| *r == 0) {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let want = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));

    let out = tempfile::tempdir().unwrap();
    let measured = [4, 5, 6, 7, 9].into_iter().any(want).then(|| measure(out.path()));

    let mut failed = 0;
    let mut report = |n: u32, name: &str, f: &dyn Fn() -> Outcome| {
        if !want(n) {
            return;
        }
        let started = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {n:>2} {name}: {detail} [{:.1?}]", started.elapsed());
    };
    report(1, "differential equivalence", &equivalence);
    report(2, "mvcc oracle", &mvcc_random);
    report(3, "policy oracle", &policy_tables);
    if let Some(m) = &measured {
        report(4, "slow_remote speedup", &|| slow_speedup(m));
        report(5, "slow_remote vscc cache effect", &|| cache_effect(m));
        report(6, "fast_embedded speedup and commit overlap", &|| fast_speedup(m));
        report(7, "overlap bound", &|| overlap_bound(m));
    }
    report(8, "recovery", &recovery);
    if let Some(m) = &measured {
        report(9, "accounting", &|| accounting(m));
    }
    report(10, "chaincode cache reads", &cache_reads);

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
