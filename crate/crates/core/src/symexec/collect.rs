use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::{Bundle, Seed};
use crate::primitives::{Address, U256};
use crate::vm::opcode::*;
use crate::vm::{is_binary, ExecutionTrace, StepEvent, StepObserver, VmError};

use super::expr::{ExprArena, ExprId, Source};

/// Expression nodes allowed per collected sequence.
pub const DEFAULT_NODE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolicError {
    #[error("expression budget of {0} nodes exceeded")]
    SymbolicBudgetExceeded(usize),
    #[error("synthesized seed does not reach the flipped edge")]
    ValidationFailed,
    #[error(transparent)]
    Vm(#[from] VmError),
}

/// One executed `JUMPI`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchConstraint {
    pub tx: usize,
    pub address: Address,
    pub pc: u32,
    pub predicate: ExprId,
    pub taken: bool,
}

/// Branch conditions of one concrete run, in execution order.
#[derive(Debug, Clone, Default)]
pub struct PathConstraint {
    pub arena: ExprArena,
    pub branches: Vec<BranchConstraint>,
    /// Observed value of every source the run touched.
    pub observed: BTreeMap<Source, U256>,
    pub traces: Vec<ExecutionTrace>,
}

#[derive(Default)]
struct Shadow {
    stack: Vec<Option<ExprId>>,
    /// Symbolic words stored at exact memory offsets.
    memory: BTreeMap<U256, ExprId>,
}

impl Shadow {
    fn forget(&mut self, offset: U256, size: U256) {
        if size.is_zero() {
            return;
        }
        let lo = offset.saturating_sub(U256::from(31u8));
        let hi = offset.saturating_add(size);
        let doomed: Vec<U256> = self.memory.range(lo..hi).map(|(k, _)| *k).collect();
        for k in doomed {
            self.memory.remove(&k);
        }
    }
}

struct Collector<'a> {
    tx: usize,
    arena: &'a mut ExprArena,
    branches: &'a mut Vec<BranchConstraint>,
    observed: &'a mut BTreeMap<Source, U256>,
    frames: HashMap<u32, Shadow>,
    top: Option<u32>,
    budget: usize,
    exceeded: bool,
}

impl Collector<'_> {
    fn operand(&mut self, sym: Option<ExprId>, concrete: U256) -> ExprId {
        sym.unwrap_or_else(|| self.arena.constant(concrete))
    }

    fn source(&mut self, s: Source, value: U256) -> Option<ExprId> {
        self.observed.insert(s, value);
        Some(self.arena.var(s))
    }

    fn output(&mut self, e: &StepEvent<'_>, ins: &[Option<ExprId>], sh_mem: &BTreeMap<U256, ExprId>) -> Option<ExprId> {
        let out = e.output?;
        let top = self.top == Some(e.frame);
        let any_sym = ins.iter().any(Option::is_some);
        match e.opcode {
            op if is_binary(op) && any_sym => {
                let a = self.operand(ins[0], e.inputs[0]);
                let b = self.operand(ins[1], e.inputs[1]);
                Some(self.arena.bin(op, a, b))
            }
            op @ (ISZERO | NOT) if any_sym => {
                let a = ins[0].expect("symbolic operand");
                Some(self.arena.un(op, a))
            }
            CALLDATALOAD if top => {
                let off = e.inputs[0];
                let four = U256::from(4u8);
                if off >= four && ((off - four) % U256::from(32u8)).is_zero() && off < U256::from(1u64 << 32) {
                    let word = ((off - four) / U256::from(32u8)).to::<usize>();
                    self.source(Source::Arg { tx: self.tx, word }, out)
                } else {
                    None
                }
            }
            CALLVALUE if top => self.source(Source::CallValue { tx: self.tx }, out),
            TIMESTAMP => self.source(Source::Timestamp { tx: self.tx }, out),
            NUMBER => self.source(Source::BlockNumber { tx: self.tx }, out),
            MLOAD => sh_mem.get(&e.inputs[0]).copied(),
            KECCAK256 => {
                let (off, size) = (e.inputs[0], e.inputs[1]);
                let lo = off.saturating_sub(U256::from(31u8));
                let hi = off.saturating_add(size);
                let deps: BTreeSet<Source> = sh_mem
                    .range(lo..hi)
                    .flat_map(|(_, &x)| self.arena.support(x))
                    .collect();
                (!deps.is_empty()).then(|| self.arena.opaque(out, deps.into_iter().collect()))
            }
            _ => None,
        }
    }
}

impl StepObserver for Collector<'_> {
    fn on_step(&mut self, e: &StepEvent<'_>) {
        if self.top.is_none() {
            self.top = Some(e.frame);
        }
        if self.arena.len() > self.budget {
            self.exceeded = true;
        }
        let mut sh = self.frames.remove(&e.frame).unwrap_or_default();
        match e.opcode {
            DUP1..=DUP16 => {
                let n = (e.opcode - DUP1 + 1) as usize;
                let v = sh.stack.len().checked_sub(n).and_then(|i| sh.stack[i]);
                sh.stack.push(v);
            }
            SWAP1..=SWAP16 => {
                let n = (e.opcode - SWAP1 + 1) as usize;
                let len = sh.stack.len();
                if len > n {
                    sh.stack.swap(len - 1, len - 1 - n);
                }
            }
            _ => {
                let ins: Vec<Option<ExprId>> =
                    (0..e.inputs.len()).map(|_| sh.stack.pop().flatten()).collect();
                match e.opcode {
                    JUMPI => {
                        let predicate = self.operand(ins[1], e.inputs[1]);
                        self.branches.push(BranchConstraint {
                            tx: self.tx,
                            address: e.code_address,
                            pc: e.pc,
                            predicate,
                            taken: !e.inputs[1].is_zero(),
                        });
                    }
                    MSTORE => {
                        sh.forget(e.inputs[0], U256::from(32u8));
                        if let Some(v) = ins[1] {
                            sh.memory.insert(e.inputs[0], v);
                        }
                    }
                    MSTORE8 => sh.forget(e.inputs[0], U256::from(1u8)),
                    CALLDATACOPY | RETURNDATACOPY => sh.forget(e.inputs[0], e.inputs[2]),
                    CALL => sh.forget(e.inputs[5], e.inputs[6]),
                    DELEGATECALL | STATICCALL => sh.forget(e.inputs[4], e.inputs[5]),
                    _ => {}
                }
                if e.output.is_some() {
                    let v = if self.exceeded { None } else { self.output(e, &ins, &sh.memory) };
                    sh.stack.push(v);
                }
            }
        }
        self.frames.insert(e.frame, sh);
    }
}

/// Re-execute `seed` with argument words, call value, timestamp and block
/// number symbolic. Storage and everything else stays concrete.
pub fn collect_constraints(bundle: &Bundle, seed: &Seed) -> Result<PathConstraint, SymbolicError> {
    collect_constraints_with_budget(bundle, seed, DEFAULT_NODE_BUDGET)
}

pub fn collect_constraints_with_budget(
    bundle: &Bundle,
    seed: &Seed,
    node_budget: usize,
) -> Result<PathConstraint, SymbolicError> {
    let mut pc = PathConstraint::default();
    let mut state = bundle.initial_state().clone();
    for (tx, t) in seed.txs.iter().enumerate() {
        let input = bundle.tx_input(t);
        let mut c = Collector {
            tx,
            arena: &mut pc.arena,
            branches: &mut pc.branches,
            observed: &mut pc.observed,
            frames: HashMap::new(),
            top: None,
            budget: node_budget,
            exceeded: false,
        };
        let (trace, next) =
            bundle
                .vm()
                .execute_transaction_observed(&state, input.to, &input.calldata, &input.env, &mut c)?;
        if c.exceeded || pc.arena.len() > node_budget {
            return Err(SymbolicError::SymbolicBudgetExceeded(node_budget));
        }
        pc.traces.push(trace);
        state = next;
    }
    Ok(pc)
}
