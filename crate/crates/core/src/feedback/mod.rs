//! Campaign-wide coverage, the three novelty signals and stagnation detection.

mod stagnation;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

pub use stagnation::{StagnationDetector, Trigger};

use crate::corpus::Seed;
use crate::primitives::{Address, U256};
use crate::vm::{BranchEdge, ExecutionTrace};

/// A storage dependency between two transactions of one sequence: a
/// successful earlier transaction wrote `slot` of `address` and a later one
/// read it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawPair {
    pub address: Address,
    pub slot: U256,
    pub writer: [u8; 4],
    pub reader: [u8; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub delta_branch: u64,
    pub delta_inst: u64,
    pub delta_raw: u64,
    pub fit: u64,
}

impl FitnessRecord {
    pub fn new(delta_branch: u64, delta_inst: u64, delta_raw: u64) -> Self {
        Self {
            delta_branch,
            delta_inst,
            delta_raw,
            fit: delta_branch + delta_inst + delta_raw,
        }
    }

    /// Gain credited to mutation operators (RAW novelty excluded).
    pub fn operator_gain(&self) -> u64 {
        self.delta_branch + self.delta_inst
    }
}

/// RAW pairs of one executed sequence, given each transaction's selector.
/// Writes count only from successful transactions; reads count regardless
/// of how the reading transaction ended.
pub fn raw_pairs(traces: &[ExecutionTrace], selectors: &[[u8; 4]]) -> BTreeSet<RawPair> {
    let mut writers: BTreeMap<(Address, U256), BTreeSet<[u8; 4]>> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for (k, trace) in traces.iter().enumerate() {
        let reader = selectors[k];
        for read in &trace.storage_reads {
            if let Some(ws) = writers.get(&(read.address, read.slot)) {
                for &writer in ws {
                    out.insert(RawPair {
                        address: read.address,
                        slot: read.slot,
                        writer,
                        reader,
                    });
                }
            }
        }
        if trace.succeeded() {
            for w in &trace.storage_writes {
                writers.entry((w.address, w.slot)).or_default().insert(reader);
            }
        }
    }
    out
}

/// RAW dependencies as `(writer index, reader index)` transaction positions.
pub fn raw_index_pairs(traces: &[ExecutionTrace]) -> BTreeSet<(usize, usize)> {
    let mut writers: BTreeMap<(Address, U256), BTreeSet<usize>> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for (k, trace) in traces.iter().enumerate() {
        for read in &trace.storage_reads {
            if let Some(ws) = writers.get(&(read.address, read.slot)) {
                out.extend(ws.iter().map(|&w| (w, k)));
            }
        }
        if trace.succeeded() {
            for w in &trace.storage_writes {
                writers.entry((w.address, w.slot)).or_default().insert(k);
            }
        }
    }
    out
}

/// Everything one sequence touched, deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedCoverage {
    pub sites: HashSet<(Address, u32)>,
    pub edges: HashSet<BranchEdge>,
    pub raw: BTreeSet<RawPair>,
}

impl SeedCoverage {
    pub fn from_traces(traces: &[ExecutionTrace], selectors: &[[u8; 4]]) -> Self {
        let mut cov = SeedCoverage::default();
        for t in traces {
            cov.sites.extend(t.instr_sites.iter().map(|s| (s.address, s.pc)));
            cov.edges.extend(t.branch_edges.iter().copied());
        }
        cov.raw = raw_pairs(traces, selectors);
        cov
    }

    pub fn of_seed(traces: &[ExecutionTrace], seed: &Seed) -> Self {
        Self::from_traces(traces, &seed.selectors())
    }

    pub fn deltas(&self, global: &GlobalCoverage) -> FitnessRecord {
        FitnessRecord::new(
            self.edges.iter().filter(|e| !global.branch_edges.contains(e)).count() as u64,
            self.sites.iter().filter(|s| !global.instr_sites.contains(s)).count() as u64,
            self.raw.iter().filter(|p| !global.raw_pairs.contains(p)).count() as u64,
        )
    }
}

/// Coverage accumulated over a campaign. Only ever grows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalCoverage {
    pub instr_sites: HashSet<(Address, u32)>,
    pub branch_edges: HashSet<BranchEdge>,
    pub raw_pairs: HashSet<RawPair>,
}

impl GlobalCoverage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn absorb(&mut self, cov: &SeedCoverage) {
        self.instr_sites.extend(cov.sites.iter().copied());
        self.branch_edges.extend(cov.edges.iter().copied());
        self.raw_pairs.extend(cov.raw.iter().copied());
    }

    pub fn merge(&mut self, other: &GlobalCoverage) {
        self.instr_sites.extend(other.instr_sites.iter().copied());
        self.branch_edges.extend(other.branch_edges.iter().copied());
        self.raw_pairs.extend(other.raw_pairs.iter().copied());
    }

    pub fn covers_edge(&self, edge: &BranchEdge) -> bool {
        self.branch_edges.contains(edge)
    }

    pub fn totals(&self) -> (usize, usize, usize) {
        (self.instr_sites.len(), self.branch_edges.len(), self.raw_pairs.len())
    }
}

/// Novelty of `seed`'s traces against `global`; `global` is not modified.
pub fn deltas(traces: &[ExecutionTrace], seed: &Seed, global: &GlobalCoverage) -> FitnessRecord {
    SeedCoverage::of_seed(traces, seed).deltas(global)
}

/// Union `seed`'s traces into `global`.
pub fn commit(global: &mut GlobalCoverage, traces: &[ExecutionTrace], seed: &Seed) {
    global.absorb(&SeedCoverage::of_seed(traces, seed));
}
