use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Origin, Seed};

/// Cut positions in `1..len` that keep every `(writer, reader)` pair on one
/// side. Falls back to the end cut when no interior position qualifies.
pub fn legal_cuts(len: usize, pairs: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let cuts: Vec<usize> = (1..len).filter(|&c| !pairs.iter().any(|&(w, r)| w < c && c <= r)).collect();
    if cuts.is_empty() {
        vec![len]
    } else {
        cuts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossoverPlan {
    pub cut_a: usize,
    pub cut_b: usize,
}

/// `A[..cut_a] ++ B[cut_b..]` and `B[..cut_b] ++ A[cut_a..]`, truncated to `max_len`.
pub fn splice(a: &Seed, b: &Seed, plan: &CrossoverPlan, max_len: usize) -> (Seed, Seed) {
    let join = |x: &Seed, cx: usize, y: &Seed, cy: usize| {
        let mut txs: Vec<_> = x.txs[..cx].iter().chain(&y.txs[cy..]).cloned().collect();
        txs.truncate(max_len.max(1));
        Seed::new(txs, Origin::Crossover)
    };
    (join(a, plan.cut_a, b, plan.cut_b), join(b, plan.cut_b, a, plan.cut_a))
}

/// Single-point crossover that never separates a RAW writer from its reader.
/// `raw_a` and `raw_b` are the parents' dependencies as transaction indices.
pub fn crossover_raw_aware<R: Rng + ?Sized>(
    a: &Seed,
    raw_a: &BTreeSet<(usize, usize)>,
    b: &Seed,
    raw_b: &BTreeSet<(usize, usize)>,
    max_len: usize,
    rng: &mut R,
) -> (Seed, Seed) {
    if a.txs == b.txs {
        return (a.clone(), b.clone());
    }
    let plan = CrossoverPlan {
        cut_a: *legal_cuts(a.len(), raw_a).choose(rng).unwrap(),
        cut_b: *legal_cuts(b.len(), raw_b).choose(rng).unwrap(),
    };
    splice(a, b, &plan, max_len)
}
