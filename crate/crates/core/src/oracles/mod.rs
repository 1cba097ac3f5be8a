//! Bug oracles. Each detector reads one executed sequence (traces plus pre
//! and post state) and the bundle's role metadata. BD and TD confirm their
//! findings by re-executing perturbed copies of the sequence.

mod class;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use class::BugClass;

use crate::corpus::{Bundle, Execution, Seed, SeedId, Transaction, TxEnv};
use crate::mutate::{BLOCK_JUMP, TIMESTAMP_JUMP};
use crate::primitives::{Address, U256};
use crate::vm::{CallKind, Exception, ExecutionTrace};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BugReport {
    pub class: BugClass,
    pub seed: SeedId,
    pub tx_index: usize,
    pub address: Address,
    pub pc: u32,
    pub description: String,
}

impl BugReport {
    /// The cited instruction was executed in the cited transaction.
    pub fn evidence_valid(&self, exec: &Execution) -> bool {
        exec.traces
            .get(self.tx_index)
            .is_some_and(|t| t.visited(&self.address, self.pc))
    }
}

struct Ctx<'a> {
    seed: &'a Seed,
    exec: &'a Execution,
    bundle: &'a Bundle,
    out: Vec<BugReport>,
}

impl<'a> Ctx<'a> {
    fn report(&mut self, class: BugClass, tx_index: usize, address: Address, pc: u32, description: String) {
        self.out.push(BugReport {
            class,
            seed: self.seed.id,
            tx_index,
            address,
            pc,
            description,
        });
    }

    fn traces(&self) -> &'a [ExecutionTrace] {
        &self.exec.traces
    }

    fn sender(&self, k: usize) -> Address {
        self.bundle.sender(self.seed.txs[k].sender)
    }
}

fn last_site(t: &ExecutionTrace) -> Option<(Address, u32)> {
    t.instr_sites.last().map(|s| (s.address, s.pc))
}

fn first_site(t: &ExecutionTrace) -> Option<(Address, u32)> {
    t.instr_sites.first().map(|s| (s.address, s.pc))
}

fn assert_fail(cx: &mut Ctx) {
    let mut effects = false;
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        if t.exception == Exception::AssertFail && effects {
            if let Some((a, pc)) = last_site(t) {
                cx.report(BugClass::AF, k, a, pc, "assertion failed after persisted effects".into());
            }
        }
        if t.succeeded()
            && (!t.storage_writes.is_empty() || !t.ether_transfers.is_empty() || !cx.seed.txs[k].value.is_zero())
        {
            effects = true;
        }
    }
}

/// Success plus the transfers the contract made, used as a comparable outcome.
fn transfer_outcome(t: &ExecutionTrace, contract: Address) -> (bool, Vec<(Address, U256)>) {
    let mut v: Vec<(Address, U256)> = if t.succeeded() {
        t.ether_transfers.iter().filter(|x| x.from == contract).map(|x| (x.to, x.amount)).collect()
    } else {
        Vec::new()
    };
    v.sort();
    (t.succeeded(), v)
}

fn block_dependency(cx: &mut Ctx) {
    let contract = cx.bundle.contract();
    for k in 0..cx.traces().len() {
        let Some(branch) = cx.traces()[k].block_branches.first().copied() else {
            continue;
        };
        let base = transfer_outcome(&cx.traces()[k], contract);
        let perturbations: [fn(&mut Transaction); 4] = [
            |t| t.env.timestamp = t.env.timestamp.saturating_add(1),
            |t| t.env.timestamp = t.env.timestamp.saturating_add(TIMESTAMP_JUMP),
            |t| t.env.block_number = t.env.block_number.saturating_add(1),
            |t| t.env.block_number = t.env.block_number.saturating_add(BLOCK_JUMP),
        ];
        for perturb in perturbations {
            let mut txs = cx.seed.txs.clone();
            perturb(&mut txs[k]);
            let Ok(alt) = cx.bundle.execute(&txs) else { continue };
            if transfer_outcome(&alt.traces[k], contract) != base {
                cx.report(BugClass::BD, k, branch.address, branch.pc, "block data decides a transfer".into());
                break;
            }
        }
    }
}

fn overflow(cx: &mut Ctx) {
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        if !t.succeeded() {
            continue;
        }
        for o in t.overflows.clone() {
            cx.report(BugClass::IO, k, o.address, o.wrap_pc, format!("wrapped value reaches {:?} at pc {}", o.sink, o.sink_pc));
        }
    }
}

/// Attackers that sent value to the contract in a successful transaction.
fn paying_attackers(cx: &Ctx) -> BTreeSet<Address> {
    let mut out = BTreeSet::new();
    for (k, t) in cx.traces().iter().enumerate() {
        if !t.succeeded() {
            continue;
        }
        let who = cx.sender(k);
        if cx.bundle.is_attacker(&who) && !cx.seed.txs[k].value.is_zero() {
            out.insert(who);
        }
        for c in &t.external_calls {
            if c.scripted && c.success && !c.value.is_zero() {
                out.insert(c.from);
            }
        }
    }
    out
}

fn leaking_ether(cx: &mut Ctx) {
    let payers = paying_attackers(cx);
    let contract = cx.bundle.contract();
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        if !t.succeeded() {
            continue;
        }
        let hits: Vec<(u32, Address)> = t
            .contract_calls()
            .filter(|c| c.kind == CallKind::Call && c.success && !c.value.is_zero() && c.from == contract)
            .filter(|c| cx.bundle.is_attacker(&c.target) && !payers.contains(&c.target))
            .filter(|c| t.ether_transfers.iter().any(|x| x.from == contract && x.to == c.target && x.amount == c.value))
            .map(|c| (c.pc, c.target))
            .collect();
        for (pc, to) in hits {
            cx.report(BugClass::LE, k, contract, pc, format!("ether sent to {to}, which paid nothing in"));
        }
    }
}

fn frozen_ether(cx: &mut Ctx) {
    let contract = cx.bundle.contract();
    if cx.exec.post.balance(&contract).is_zero() || cx.bundle.code.can_send_value() {
        return;
    }
    let payable = (0..cx.traces().len()).find(|&k| cx.traces()[k].succeeded() && !cx.seed.txs[k].value.is_zero());
    if let Some(k) = payable {
        if let Some((a, pc)) = first_site(&cx.traces()[k]) {
            cx.report(BugClass::FE, k, a, pc, "contract accepts ether but can never send it".into());
        }
    }
}

fn reentrancy(cx: &mut Ctx) {
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        if !t.succeeded() {
            continue;
        }
        let mut hits = Vec::new();
        for c in t.contract_calls() {
            if c.kind != CallKind::Call || c.value.is_zero() || !c.reentered || !c.reentry_succeeded {
                continue;
            }
            let stale = t.storage_reads.iter().any(|r| {
                r.address == c.from
                    && r.order < c.order_start
                    && t.storage_writes.iter().any(|w| {
                        w.address == r.address && w.slot == r.slot && w.frame == c.frame && w.order > c.order_end
                    })
            });
            if stale {
                hits.push((c.from, c.pc));
            }
        }
        for (a, pc) in hits {
            cx.report(BugClass::RE, k, a, pc, "re-entered during a value call before state was updated".into());
        }
    }
}

/// Wei received and wei paid as call value by attacker accounts, over the
/// successful transactions.
fn attacker_flow(bundle: &Bundle, txs: &[Transaction], traces: &[ExecutionTrace]) -> (U256, U256) {
    let ok = || txs.iter().zip(traces).filter(|(_, t)| t.succeeded());
    let received = ok()
        .flat_map(|(_, t)| t.ether_transfers.iter())
        .filter(|x| bundle.is_attacker(&x.to))
        .fold(U256::ZERO, |acc, x| acc.saturating_add(x.amount));
    let paid = ok()
        .filter(|(tx, _)| bundle.is_attacker(&bundle.sender(tx.sender)))
        .fold(U256::ZERO, |acc, (tx, _)| acc.saturating_add(tx.value));
    (received, paid)
}

fn order_dependency(cx: &mut Ctx) {
    if !cx.bundle.code.can_send_value() || cx.seed.txs.len() < 2 {
        return;
    }
    // Forced balances and call results would move with the swapped
    // transaction; compare both orders without them.
    let plain: Vec<Transaction> = cx
        .seed
        .txs
        .iter()
        .map(|tx| {
            let mut tx = tx.clone();
            tx.env = TxEnv {
                timestamp: tx.env.timestamp,
                block_number: tx.env.block_number,
                gas_limit: tx.env.gas_limit,
                ..TxEnv::default()
            };
            tx
        })
        .collect();
    let Ok(base) = cx.bundle.execute(&plain) else { return };
    let (got, paid) = attacker_flow(cx.bundle, &plain, &base.traces);
    for k in 0..plain.len() - 1 {
        if cx.sender(k) == cx.sender(k + 1) {
            continue;
        }
        let mut txs = plain.clone();
        txs.swap(k, k + 1);
        let Ok(alt) = cx.bundle.execute(&txs) else { continue };
        let (alt_got, alt_paid) = attacker_flow(cx.bundle, &txs, &alt.traces);
        // Both what the attacker is paid and its net gain depend on the order.
        if got != alt_got && got.saturating_add(alt_paid) != alt_got.saturating_add(paid) {
            let t = &cx.traces()[k + 1];
            if let Some((a, pc)) = last_site(t).or_else(|| last_site(&cx.traces()[k])) {
                let idx = if t.instr_sites.is_empty() { k } else { k + 1 };
                cx.report(BugClass::TD, idx, a, pc, format!("swapping transactions {k} and {} changes attacker gain", k + 1));
            }
            break;
        }
    }
}

fn unchecked_call(cx: &mut Ctx) {
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        if !t.succeeded() {
            continue;
        }
        let hits: Vec<(Address, u32)> = t
            .contract_calls()
            .filter(|c| c.status.is_zero() && !c.status_checked)
            .map(|c| (c.from, c.pc))
            .collect();
        for (a, pc) in hits {
            cx.report(BugClass::UE, k, a, pc, "failed call status is ignored".into());
        }
    }
}

fn unprotected_selfdestruct(cx: &mut Ctx) {
    let owner = cx.bundle.owner();
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        if !t.succeeded() || cx.sender(k) == owner {
            continue;
        }
        for s in t.selfdestructs.clone() {
            let sender = cx.sender(k);
            cx.report(BugClass::US, k, s.address, s.pc, format!("selfdestruct triggered by {sender}"));
        }
    }
}

fn unsafe_delegatecall(cx: &mut Ctx) {
    let owner = cx.bundle.owner();
    let contract = cx.bundle.contract();
    for k in 0..cx.traces().len() {
        let t = &cx.traces()[k];
        let mut hits = Vec::new();
        for c in t.contract_calls().filter(|c| c.kind == CallKind::DelegateCall) {
            let tainted_slot = c.target_slot.is_some_and(|slot| {
                (0..=k).any(|j| {
                    let w = &cx.traces()[j];
                    (w.succeeded() || j == k)
                        && cx.sender(j) != owner
                        && w.storage_writes.iter().any(|s| s.address == contract && s.slot == slot)
                })
            });
            if c.target_from_calldata || tainted_slot {
                hits.push((c.from, c.pc));
            }
        }
        for (a, pc) in hits {
            cx.report(BugClass::UD, k, a, pc, "delegatecall target is attacker-controlled".into());
        }
    }
}

/// Run every detector on one executed seed. Reports are unique per
/// `(class, address, pc)`, keeping the earliest transaction.
pub fn detect_all(seed: &Seed, exec: &Execution, bundle: &Bundle) -> Vec<BugReport> {
    let mut cx = Ctx {
        seed,
        exec,
        bundle,
        out: Vec::new(),
    };
    assert_fail(&mut cx);
    block_dependency(&mut cx);
    overflow(&mut cx);
    leaking_ether(&mut cx);
    frozen_ether(&mut cx);
    reentrancy(&mut cx);
    order_dependency(&mut cx);
    unchecked_call(&mut cx);
    unprotected_selfdestruct(&mut cx);
    unsafe_delegatecall(&mut cx);
    let mut seen = BTreeSet::new();
    cx.out.retain(|r| seen.insert((r.class, r.address, r.pc)));
    cx.out
}

/// Memoizes [`detect_all`] per seed id.
#[derive(Debug, Default)]
pub struct OracleCache {
    results: HashMap<SeedId, Vec<BugReport>>,
}

impl OracleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn detect(&mut self, seed: &Seed, exec: &Execution, bundle: &Bundle) -> &[BugReport] {
        self.results
            .entry(seed.id)
            .or_insert_with(|| detect_all(seed, exec, bundle))
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}
