//! Cell-by-cell ratios between two summaries.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::BenchError;
use crate::experiment::{CellKey, CellSummary, METRICS};

#[derive(Clone, Debug, PartialEq)]
pub struct CellRatio {
    pub key: CellKey,
    /// Throughput of `b` over throughput of `a`.
    pub throughput: f64,
    /// Mean latency of `a` over mean latency of `b`, in `METRICS` order;
    /// above 1 means `b` is faster.
    pub latency: [f64; 9],
}

impl CellRatio {
    pub fn metric(&self, name: &str) -> f64 {
        self.latency[METRICS.iter().position(|m| *m == name).expect("known metric")]
    }
}

/// `num / den`, with 0/0 read as no change.
pub fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn index(cells: &[CellSummary], side: &str) -> Result<BTreeMap<CellKey, CellSummary>, BenchError> {
    let mut out = BTreeMap::new();
    for c in cells {
        if let Some(e) = &c.error {
            return Err(BenchError::Mismatch(format!("cell {:?} failed in {side}: {e}", c.key())));
        }
        if out.insert(c.key(), c.clone()).is_some() {
            return Err(BenchError::Mismatch(format!("cell {:?} appears twice in {side}", c.key())));
        }
    }
    Ok(out)
}

/// Pairs the cells of `a` and `b` by backend, worker count, and block size.
/// Both must contain exactly the same cells.
pub fn compare(a: &[CellSummary], b: &[CellSummary]) -> Result<Vec<CellRatio>, BenchError> {
    let a = index(a, "first summary")?;
    let b = index(b, "second summary")?;
    if a.keys().ne(b.keys()) {
        let only = |x: &BTreeMap<CellKey, CellSummary>, y: &BTreeMap<CellKey, CellSummary>| {
            x.keys().filter(|k| !y.contains_key(*k)).cloned().collect::<Vec<_>>()
        };
        return Err(BenchError::Mismatch(format!(
            "only in first: {:?}; only in second: {:?}",
            only(&a, &b),
            only(&b, &a)
        )));
    }
    Ok(a.iter()
        .map(|(k, ca)| {
            let cb = &b[k];
            let mut latency = [0.0; 9];
            for (i, slot) in latency.iter_mut().enumerate() {
                *slot = ratio(ca.latency[i].mean, cb.latency[i].mean);
            }
            CellRatio {
                key: k.clone(),
                throughput: ratio(cb.throughput.mean, ca.throughput.mean),
                latency,
            }
        })
        .collect())
}

pub fn format_report(ratios: &[CellRatio]) -> String {
    let mut out = String::new();
    let _ = write!(out, "backend,workers,block_size,throughput");
    for m in METRICS {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for r in ratios {
        let _ = write!(out, "{},{},{},{:.3}", r.key.backend, r.key.workers, r.key.block_size, r.throughput);
        for v in r.latency {
            let _ = write!(out, ",{v:.3}");
        }
        out.push('\n');
    }
    out
}
