use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::primitives::{Address, U256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Exception {
    #[default]
    None,
    Revert,
    InvalidOp,
    OutOfGas,
    AssertFail,
    StackErr,
}

impl Exception {
    pub fn is_none(self) -> bool {
        self == Exception::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstrSite {
    pub address: Address,
    pub pc: u32,
    pub opcode: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchEdge {
    pub address: Address,
    pub pc: u32,
    pub taken: bool,
}

/// One SLOAD or SSTORE. `order` is a transaction-local event counter shared
/// with call boundaries, so accesses can be placed relative to calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StorageAccess {
    pub order: u32,
    pub frame: u32,
    pub address: Address,
    pub slot: U256,
    pub value: U256,
    pub pc: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallKind {
    Call,
    DelegateCall,
    StaticCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExternalCall {
    pub kind: CallKind,
    pub from: Address,
    pub target: Address,
    pub value: U256,
    pub success: bool,
    /// Status word pushed for the caller (may differ from `success` under a
    /// call-return override).
    pub status: U256,
    pub pc: u32,
    pub depth: u32,
    pub frame: u32,
    pub order_start: u32,
    pub order_end: u32,
    /// Some JUMPI, store or jump consumed the status word (or a value derived from it).
    pub status_checked: bool,
    /// Issued by a scripted counterparty rather than contract code.
    pub scripted: bool,
    pub target_from_calldata: bool,
    pub target_slot: Option<U256>,
    /// The calling contract was entered again while this call was in flight.
    pub reentered: bool,
    pub reentry_succeeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EtherTransfer {
    pub from: Address,
    pub to: Address,
    pub amount: U256,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelfDestructEvent {
    pub address: Address,
    pub beneficiary: Address,
    pub pc: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverflowSink {
    Storage,
    Value,
}

/// A wrapped arithmetic result reached a persistent sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OverflowEffect {
    pub address: Address,
    pub wrap_pc: u32,
    pub sink_pc: u32,
    pub sink: OverflowSink,
}

/// A JUMPI whose condition depends on TIMESTAMP or NUMBER.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockDependentBranch {
    pub address: Address,
    pub pc: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogRecord {
    pub address: Address,
    pub topics: Vec<U256>,
    pub data: Vec<u8>,
}

/// Everything one transaction did, in execution order.
///
/// When `exception` is not `None` the trace stops at the faulting instruction.
/// Writes, transfers and self-destructs performed inside nested frames that
/// failed are removed, so for a successful transaction every `storage_writes`
/// entry is a persisted change.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub instr_sites: Vec<InstrSite>,
    pub branch_edges: Vec<BranchEdge>,
    pub storage_writes: Vec<StorageAccess>,
    pub storage_reads: Vec<StorageAccess>,
    pub external_calls: Vec<ExternalCall>,
    pub ether_transfers: Vec<EtherTransfer>,
    pub selfdestructs: Vec<SelfDestructEvent>,
    pub overflows: Vec<OverflowEffect>,
    pub block_branches: Vec<BlockDependentBranch>,
    pub logs: Vec<LogRecord>,
    pub exception: Exception,
    pub max_call_depth: u32,
    pub gas_used: u64,
    pub return_data: Vec<u8>,
}

impl ExecutionTrace {
    pub fn succeeded(&self) -> bool {
        self.exception.is_none()
    }

    /// Stable fingerprint used by the determinism checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    /// Whether `(address, pc)` was executed in this trace.
    pub fn visited(&self, address: &Address, pc: u32) -> bool {
        self.instr_sites
            .iter()
            .any(|s| s.address == *address && s.pc == pc)
    }

    /// External calls made by contract code (scripted counterparties excluded).
    pub fn contract_calls(&self) -> impl Iterator<Item = &ExternalCall> {
        self.external_calls.iter().filter(|c| !c.scripted)
    }
}
