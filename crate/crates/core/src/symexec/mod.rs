//! Concolic branch flipping.
//!
//! A seed is re-run with its argument words, call values, timestamps and
//! block numbers tracked symbolically. Each `JUMPI` leaves a predicate; an
//! uncovered side is reached by solving the prefix plus the negated branch
//! and substituting the model back into the seed.

mod collect;
mod expr;
mod smt;
mod solver;

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::abi::{coerce_int, AbiType, AbiValue};
use crate::corpus::{Bundle, Origin, Seed};
use crate::feedback::GlobalCoverage;
use crate::primitives::{Address, U256};
use crate::vm::BranchEdge;

pub use collect::{
    collect_constraints, collect_constraints_with_budget, BranchConstraint, PathConstraint, SymbolicError,
    DEFAULT_NODE_BUDGET,
};
pub use expr::{ExprArena, ExprId, Node, Source};
pub use smt::SmtSolver;
pub use solver::{solve, Goal, SolveResult, SolveStatus, SEARCH_TRIALS};

pub const DEFAULT_MAX_FLIPS: usize = 20;
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymbolicConfig {
    pub node_budget: usize,
    pub max_flips: usize,
    #[serde(with = "millis")]
    pub time_budget: Duration,
    /// External solver tried after the built-in one reports `Unknown`.
    pub smt: Option<SmtSolver>,
}

impl Default for SymbolicConfig {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            max_flips: DEFAULT_MAX_FLIPS,
            time_budget: DEFAULT_TIME_BUDGET,
            smt: None,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl PathConstraint {
    /// Edge reached by negating branch `i`.
    pub fn flipped_edge(&self, i: usize) -> BranchEdge {
        let b = &self.branches[i];
        BranchEdge {
            address: b.address,
            pc: b.pc,
            taken: !b.taken,
        }
    }

    /// Whether branch `i` depends on any symbolic source.
    pub fn is_symbolic(&self, i: usize) -> bool {
        !self.arena.support(self.branches[i].predicate).is_empty()
    }

    /// Goals for keeping branches `[0, target)` and negating `target`.
    pub fn flip_goals(&self, target: usize) -> Vec<Goal> {
        let mut goals: Vec<Goal> = self.branches[..target]
            .iter()
            .map(|b| Goal {
                predicate: b.predicate,
                want: b.taken,
            })
            .collect();
        let t = &self.branches[target];
        goals.push(Goal {
            predicate: t.predicate,
            want: !t.taken,
        });
        goals
    }
}

/// Solve the path prefix before `target` together with the negated target
/// using the built-in solver.
pub fn flip_and_solve(pc: &PathConstraint, target: usize, budget_ms: u64) -> SolveResult {
    flip_and_solve_with(pc, target, Duration::from_millis(budget_ms), None)
}

/// As [`flip_and_solve`], falling back to `smt` when the built-in solver
/// gives up.
pub fn flip_and_solve_with(pc: &PathConstraint, target: usize, budget: Duration, smt: Option<&SmtSolver>) -> SolveResult {
    let start = Instant::now();
    let goals = pc.flip_goals(target);
    let r = solve(&pc.arena, &goals, &pc.observed, Some(start + budget));
    match (r.status, smt) {
        (SolveStatus::Unknown, Some(s)) => {
            let left = budget.saturating_sub(start.elapsed());
            if left.is_zero() {
                r
            } else {
                s.solve(&pc.arena, &goals, &pc.observed, left)
            }
        }
        _ => r,
    }
}

/// Word `value` as an argument of type `ty`; `None` for types whose head
/// word is an offset.
fn arg_from_word(ty: &AbiType, value: U256) -> Option<AbiValue> {
    Some(match ty {
        AbiType::Uint(n) => AbiValue::Uint(coerce_int(value, *n, false)),
        AbiType::Int(n) => AbiValue::Int(coerce_int(value, *n, true)),
        AbiType::Address => AbiValue::Address(Address::from_word(value)),
        AbiType::Bool => AbiValue::Bool(!value.is_zero()),
        AbiType::FixedBytes(n) => AbiValue::FixedBytes(value.to_be_bytes::<32>()[..*n as usize].to_vec()),
        AbiType::Bytes | AbiType::String | AbiType::Array(_) => return None,
    })
}

/// Copy of `base` with the assignment substituted, kept only when a
/// re-execution covers `expect`.
pub fn synthesize_seed(
    bundle: &Bundle,
    base: &Seed,
    assignment: &BTreeMap<Source, U256>,
    expect: &BranchEdge,
) -> Result<Seed, SymbolicError> {
    let mut txs = base.txs.clone();
    for (src, &v) in assignment {
        let Some(tx) = txs.get_mut(src.tx()) else {
            return Err(SymbolicError::ValidationFailed);
        };
        match *src {
            Source::Arg { word, .. } => {
                let ty = tx.function.inputs.get(word).ok_or(SymbolicError::ValidationFailed)?;
                let arg = arg_from_word(ty, v).ok_or(SymbolicError::ValidationFailed)?;
                tx.args[word] = arg;
            }
            Source::Timestamp { .. } => {
                tx.env.timestamp = v.try_into().map_err(|_| SymbolicError::ValidationFailed)?;
            }
            Source::BlockNumber { .. } => {
                tx.env.block_number = v.try_into().map_err(|_| SymbolicError::ValidationFailed)?;
            }
            Source::CallValue { .. } => tx.value = v,
        }
    }
    let exec = bundle.execute(&txs)?;
    if exec.traces.iter().any(|t| t.branch_edges.contains(expect)) {
        Ok(Seed::new(txs, Origin::Symbolic))
    } else {
        Err(SymbolicError::ValidationFailed)
    }
}

/// Record of one flip attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipAttempt {
    pub address: Address,
    pub pc: u32,
    pub taken: bool,
    pub status: SolveStatus,
    pub validated: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Exploration {
    pub seeds: Vec<Seed>,
    pub attempts: Vec<FlipAttempt>,
    pub error: Option<SymbolicError>,
}

/// Flip the uncovered sides of `seed`'s symbolic branches, deepest first,
/// within the configured flip count and wall-clock budget.
pub fn explore(bundle: &Bundle, seed: &Seed, global: &GlobalCoverage, cfg: &SymbolicConfig) -> Exploration {
    explore_many(bundle, [seed], global, cfg)
}

/// [`explore`] over several seeds in order, sharing one budget. An edge is
/// attempted at most once.
pub fn explore_many<'a>(
    bundle: &Bundle,
    seeds: impl IntoIterator<Item = &'a Seed>,
    global: &GlobalCoverage,
    cfg: &SymbolicConfig,
) -> Exploration {
    let start = Instant::now();
    let mut out = Exploration::default();
    let mut tried: HashSet<BranchEdge> = HashSet::new();
    let mut reached: HashSet<BranchEdge> = HashSet::new();
    for seed in seeds {
        if out.attempts.len() >= cfg.max_flips || start.elapsed() >= cfg.time_budget {
            break;
        }
        let pc = match collect_constraints_with_budget(bundle, seed, cfg.node_budget) {
            Ok(pc) => pc,
            Err(e) => {
                log::debug!("symbolic run of {} abandoned: {e}", seed.id);
                out.error = Some(e);
                continue;
            }
        };
        for t in &pc.traces {
            reached.extend(t.branch_edges.iter().copied());
        }
        for i in (0..pc.branches.len()).rev() {
            if out.attempts.len() >= cfg.max_flips {
                break;
            }
            let left = cfg.time_budget.saturating_sub(start.elapsed());
            if left.is_zero() {
                break;
            }
            let edge = pc.flipped_edge(i);
            if global.covers_edge(&edge) || reached.contains(&edge) || !pc.is_symbolic(i) || !tried.insert(edge) {
                continue;
            }
            let r = flip_and_solve_with(&pc, i, left, cfg.smt.as_ref());
            let mut attempt = FlipAttempt {
                address: edge.address,
                pc: edge.pc,
                taken: edge.taken,
                status: r.status,
                validated: false,
            };
            if r.status == SolveStatus::Sat {
                if let Ok(s) = synthesize_seed(bundle, seed, &r.assignment, &edge) {
                    attempt.validated = true;
                    if let Ok(exec) = bundle.execute(&s.txs) {
                        for t in &exec.traces {
                            reached.extend(t.branch_edges.iter().copied());
                        }
                    }
                    out.seeds.push(s);
                }
            }
            log::debug!("flip {}@{} -> {:?}", edge.address, edge.pc, attempt.status);
            out.attempts.push(attempt);
        }
    }
    out
}
