//! Syntactic validation and endorsement-policy validation (vscc), with the
//! chaincode definition cache.
//!
//! vscc runs on a pool of `workers` threads. Transaction `i` is handled by
//! worker `i % workers`; results are merged by index, so the outcome does
//! not depend on the worker count or on scheduling.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use crate::codec::decode_chaincode_info;
use crate::crypto::{burn_cpu, proposal_digest, verify_endorsement};
use crate::error::{Error, Result};
use crate::statedb::StateDb;
use crate::types::{Block, ChaincodeInfo, Key, Transaction, ValidationCode};

pub use crate::policy::eval_policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CachePolicy {
    /// Entries live until the chaincode is upgraded.
    OnUpgrade,
    /// The cache is emptied at the start of every block.
    PerBlock,
}

impl FromStr for CachePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "on_upgrade" | "onupgrade" | "upgrade" => Ok(CachePolicy::OnUpgrade),
            "per_block" | "perblock" | "block" => Ok(CachePolicy::PerBlock),
            other => Err(format!("unknown cache policy {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VsccConfig {
    pub workers: usize,
    /// CPU burned per endorsement verification, in microseconds.
    pub verification_cost_us: u64,
    pub cache_enabled: bool,
    pub clear_policy: CachePolicy,
}

impl Default for VsccConfig {
    fn default() -> Self {
        VsccConfig {
            workers: 16,
            verification_cost_us: 0,
            cache_enabled: true,
            clear_policy: CachePolicy::OnUpgrade,
        }
    }
}

impl VsccConfig {
    pub fn check(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("vscc workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Map from chaincode id to its definition.
///
/// Hits take a shared lock only. Misses are filled one at a time: the
/// filler re-checks the map under the fill lock before going to the
/// database, so concurrent misses on one id cost a single read.
pub struct ChaincodeCache {
    policy: CachePolicy,
    entries: RwLock<HashMap<String, Arc<ChaincodeInfo>>>,
    fill: Mutex<()>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ChaincodeCache {
    pub fn new(policy: CachePolicy) -> Self {
        ChaincodeCache {
            policy,
            entries: RwLock::new(HashMap::new()),
            fill: Mutex::new(()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    /// Called before each block's vscc stage.
    pub fn begin_block(&self) {
        if self.policy == CachePolicy::PerBlock {
            self.clear();
        }
    }

    pub fn clear(&self) {
        self.entries.write().unwrap().clear();
    }

    pub fn invalidate(&self, chaincode_id: &str) {
        self.entries.write().unwrap().remove(chaincode_id);
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn peek(&self, chaincode_id: &str) -> Option<Arc<ChaincodeInfo>> {
        self.entries.read().unwrap().get(chaincode_id).cloned()
    }
}

/// Reads a chaincode definition straight from the system namespace.
pub fn fetch_chaincode(statedb: &dyn StateDb, chaincode_id: &str) -> Result<Arc<ChaincodeInfo>> {
    match statedb.get(&Key::chaincode_definition(chaincode_id))? {
        Some(vv) => Ok(Arc::new(decode_chaincode_info(&vv.value)?)),
        None => Err(Error::UnknownChaincode(chaincode_id.to_string())),
    }
}

/// Cached lookup: a hit touches no database; a miss reads the definition
/// once and stores it.
pub fn lookup_chaincode(
    cache: &ChaincodeCache,
    statedb: &dyn StateDb,
    chaincode_id: &str,
) -> Result<Arc<ChaincodeInfo>> {
    if let Some(info) = cache.peek(chaincode_id) {
        cache.hits.fetch_add(1, Ordering::Relaxed);
        return Ok(info);
    }
    let _fill = cache.fill.lock().unwrap();
    if let Some(info) = cache.peek(chaincode_id) {
        cache.hits.fetch_add(1, Ordering::Relaxed);
        return Ok(info);
    }
    cache.misses.fetch_add(1, Ordering::Relaxed);
    let info = fetch_chaincode(statedb, chaincode_id)?;
    cache
        .entries
        .write()
        .unwrap()
        .insert(chaincode_id.to_string(), Arc::clone(&info));
    Ok(info)
}

pub fn invalidate_chaincode(cache: &ChaincodeCache, chaincode_id: &str) {
    cache.invalidate(chaincode_id);
}

fn well_formed(tx: &Transaction) -> bool {
    if tx.tx_id.is_empty() || tx.chaincode_id.is_empty() || tx.endorsements.is_empty() {
        return false;
    }
    if tx
        .endorsements
        .iter()
        .any(|e| e.org_id.is_empty() || e.signer_id.is_empty())
    {
        return false;
    }
    let mut reads = HashSet::new();
    if !tx
        .read_set
        .keys()
        .all(|k| k.is_well_formed() && reads.insert(k))
    {
        return false;
    }
    let mut writes = HashSet::new();
    tx.write_set
        .keys()
        .all(|k| k.is_well_formed() && writes.insert(k))
}

/// Per-transaction structural checks. Ill-formed transactions and repeated
/// tx ids (after the first occurrence) become `BadSyntax`; everything else
/// stays `NotValidated`.
pub fn syntactic_validate(block: &Block) -> Vec<ValidationCode> {
    let mut seen = HashSet::with_capacity(block.transactions.len());
    block
        .transactions
        .iter()
        .map(|tx| {
            let first = seen.insert(tx.tx_id.as_str());
            if first && well_formed(tx) {
                ValidationCode::NotValidated
            } else {
                ValidationCode::BadSyntax
            }
        })
        .collect()
}

fn validate_tx(
    tx: &Transaction,
    cfg: &VsccConfig,
    cache: &ChaincodeCache,
    statedb: &dyn StateDb,
) -> Result<ValidationCode> {
    let info = if cfg.cache_enabled {
        lookup_chaincode(cache, statedb, &tx.chaincode_id)
    } else {
        fetch_chaincode(statedb, &tx.chaincode_id)
    };
    let info = match info {
        Ok(info) => info,
        Err(Error::UnknownChaincode(_)) => return Ok(ValidationCode::UnknownChaincode),
        Err(e) => return Err(e),
    };
    let digest = proposal_digest(tx);
    let cost = Duration::from_micros(cfg.verification_cost_us);
    let mut orgs = BTreeSet::new();
    for e in &tx.endorsements {
        burn_cpu(cost);
        if verify_endorsement(e, &digest) {
            orgs.insert(e.org_id.as_str());
        }
    }
    if eval_policy(&info.policy, &|org| orgs.contains(org)) {
        Ok(ValidationCode::NotValidated)
    } else {
        Ok(ValidationCode::PolicyFailure)
    }
}

/// Endorsement and policy checks for every transaction still
/// `NotValidated` in `codes`. Passing transactions stay `NotValidated`
/// (candidates for mvcc); failing ones get `PolicyFailure` or
/// `UnknownChaincode`.
pub fn vscc_validate(
    block: &Block,
    codes: &mut [ValidationCode],
    cfg: &VsccConfig,
    cache: &ChaincodeCache,
    statedb: &dyn StateDb,
    pool: &rayon::ThreadPool,
) -> Result<()> {
    let workers = cfg.workers.max(1);
    let snapshot: &[ValidationCode] = codes;
    let mut slots: Vec<Vec<(usize, Result<ValidationCode>)>> = (0..workers).map(|_| Vec::new()).collect();
    pool.scope(|s| {
        for (w, slot) in slots.iter_mut().enumerate() {
            s.spawn(move |_| {
                for i in (w..block.transactions.len()).step_by(workers) {
                    if snapshot[i] != ValidationCode::NotValidated {
                        continue;
                    }
                    slot.push((i, validate_tx(&block.transactions[i], cfg, cache, statedb)));
                }
            });
        }
    });
    for (i, code) in slots.into_iter().flatten() {
        codes[i] = code?;
    }
    Ok(())
}

/// vscc configuration together with its worker pool and cache.
pub struct Validator {
    cfg: VsccConfig,
    pool: rayon::ThreadPool,
    cache: ChaincodeCache,
}

impl Validator {
    pub fn new(cfg: VsccConfig) -> Result<Self> {
        cfg.check()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .thread_name(|i| format!("vscc-{i}"))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Validator {
            cache: ChaincodeCache::new(cfg.clear_policy),
            cfg,
            pool,
        })
    }

    pub fn config(&self) -> &VsccConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &ChaincodeCache {
        &self.cache
    }

    pub fn validate(&self, block: &Block, codes: &mut [ValidationCode], statedb: &dyn StateDb) -> Result<()> {
        if self.cfg.cache_enabled {
            self.cache.begin_block();
        }
        vscc_validate(block, codes, &self.cfg, &self.cache, statedb, &self.pool)
    }
}
