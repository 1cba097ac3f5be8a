use serde::{Deserialize, Serialize};

use super::ExecutionTrace;

/// Coarse behaviour indicators over one executed sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BehaviorMetrics {
    /// Mean of per-transaction maximum call depth.
    pub d: f64,
    /// Fraction of transactions that made at least one external call.
    pub r: f64,
    /// Number of ether transfers.
    pub e: u64,
    /// 1 iff some transaction persisted a storage write.
    pub s: u8,
}

/// Returns the all-zero metrics for an empty slice.
pub fn behavior_metrics(traces: &[ExecutionTrace]) -> BehaviorMetrics {
    if traces.is_empty() {
        return BehaviorMetrics::default();
    }
    let n = traces.len() as f64;
    let d = traces.iter().map(|t| t.max_call_depth as f64).sum::<f64>() / n;
    let with_calls = traces.iter().filter(|t| t.contract_calls().next().is_some()).count();
    let e = traces
        .iter()
        .filter(|t| t.succeeded())
        .map(|t| t.ether_transfers.len() as u64)
        .sum();
    let s = traces.iter().any(|t| t.succeeded() && !t.storage_writes.is_empty()) as u8;
    BehaviorMetrics {
        d,
        r: with_calls as f64 / n,
        e,
        s,
    }
}
