//! Instrumented interpreter for an EVM opcode subset.
//!
//! Supported: STOP, ADD SUB MUL DIV SDIV MOD EXP, LT GT SLT SGT EQ ISZERO AND
//! OR XOR NOT SHL SHR BYTE, KECCAK256, ADDRESS CALLER ORIGIN CALLVALUE
//! CALLDATALOAD CALLDATASIZE CALLDATACOPY BALANCE TIMESTAMP NUMBER GASLIMIT GAS
//! EXTCODESIZE RETURNDATASIZE RETURNDATACOPY, POP MLOAD MSTORE MSTORE8
//! PUSH1-32 DUP1-16 SWAP1-16, SLOAD SSTORE, JUMP JUMPI PC JUMPDEST, CALL
//! DELEGATECALL STATICCALL, RETURN REVERT INVALID SELFDESTRUCT, LOG0-4.
//!
//! Gas: 1 per instruction, 20 per SLOAD, 100 per SSTORE, 100 per call.
//! INVALID raises `AssertFail`. Nested calls deeper than 64 frames fail and
//! push 0. Any opcode outside the subset is a [`VmError::UnknownOpcode`].

mod arith;
pub mod asm;
mod bytecode;
mod interp;
mod metrics;
pub mod opcode;
mod state;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use arith::{binary as eval_binary, is_binary, signed_lt, unary as eval_unary};
pub use bytecode::Bytecode;
pub use interp::{CALL_DEPTH_LIMIT, MEMORY_LIMIT, STACK_LIMIT};
pub use metrics::{behavior_metrics, BehaviorMetrics};
pub use state::{
    Account, Environment, WorldState, DEFAULT_BLOCK_NUMBER, DEFAULT_GAS_LIMIT, DEFAULT_TIMESTAMP,
    MAX_GAS_LIMIT,
};
pub use trace::*;

use crate::primitives::{word_hex, Address, U256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VmError {
    #[error("unknown opcode 0x{opcode:02x} at {address} pc {pc}")]
    UnknownOpcode { address: Address, pc: usize, opcode: u8 },
    #[error("gas limit must be positive")]
    ZeroGasLimit,
    #[error("empty transaction sequence")]
    EmptySequence,
}

/// One call issued by a scripted counterparty when it receives a CALL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCall {
    /// `None` targets whichever contract called the counterparty.
    #[serde(default)]
    pub target: Option<Address>,
    #[serde(with = "hex_bytes")]
    pub calldata: Vec<u8>,
    #[serde(default, with = "word_hex")]
    pub value: U256,
    #[serde(default)]
    pub gas: Option<u64>,
}

/// Behaviour bound to a codeless address: on each incoming CALL, while fewer
/// than `max_reentries` activations happened in this transaction, issue
/// `calls` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerScript {
    pub calls: Vec<ScriptedCall>,
    #[serde(default = "one")]
    pub max_reentries: u32,
}

fn one() -> u32 {
    1
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s.trim_start_matches("0x")).map_err(serde::de::Error::custom)
    }
}

/// A fully encoded transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInput {
    pub to: Address,
    pub calldata: Vec<u8>,
    pub env: Environment,
}

/// What the interpreter reports after each instruction that completed
/// without faulting. `inputs` are the popped operands, top of stack first.
/// For the call family the event fires after the callee has returned.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub depth: u32,
    pub frame: u32,
    /// Storage context (differs from `code_address` under DELEGATECALL).
    pub address: Address,
    pub code_address: Address,
    pub pc: u32,
    pub opcode: u8,
    pub inputs: &'a [U256],
    pub output: Option<U256>,
}

pub trait StepObserver {
    fn on_step(&mut self, event: &StepEvent<'_>);
}

/// Interpreter configuration. Holds no mutable state, so one `Vm` can serve
/// any number of concurrent executions.
#[derive(Debug, Clone, Default)]
pub struct Vm {
    pub scripts: BTreeMap<Address, AttackerScript>,
}

impl Vm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(mut self, address: Address, script: AttackerScript) -> Self {
        self.scripts.insert(address, script);
        self
    }

    /// Execute one transaction. On any exception the returned state equals `state`.
    pub fn execute_transaction(
        &self,
        state: &WorldState,
        to: Address,
        calldata: &[u8],
        env: &Environment,
    ) -> Result<(ExecutionTrace, WorldState), VmError> {
        interp::Exec::run(self, state, to, calldata, env, None)
    }

    pub fn execute_transaction_observed(
        &self,
        state: &WorldState,
        to: Address,
        calldata: &[u8],
        env: &Environment,
        observer: &mut dyn StepObserver,
    ) -> Result<(ExecutionTrace, WorldState), VmError> {
        interp::Exec::run(self, state, to, calldata, env, Some(observer))
    }

    /// Apply `txs` in order, each starting from its predecessor's post-state.
    pub fn execute_sequence(
        &self,
        state: &WorldState,
        txs: &[TxInput],
    ) -> Result<(Vec<ExecutionTrace>, WorldState), VmError> {
        if txs.is_empty() {
            return Err(VmError::EmptySequence);
        }
        let mut current = state.clone();
        let mut traces = Vec::with_capacity(txs.len());
        for tx in txs {
            let (trace, next) = self.execute_transaction(&current, tx.to, &tx.calldata, &tx.env)?;
            traces.push(trace);
            current = next;
        }
        Ok((traces, current))
    }
}
