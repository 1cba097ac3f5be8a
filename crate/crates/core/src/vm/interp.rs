//! The interpreter loop, nested call handling and value-flow tagging.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use super::arith;
use super::opcode::*;
use super::trace::*;
use super::{Bytecode, Environment, StepEvent, StepObserver, Vm, VmError, WorldState};
use crate::primitives::{keccak256, Address, U256};

pub const STACK_LIMIT: usize = 1024;
pub const CALL_DEPTH_LIMIT: u32 = 64;
/// Memory beyond this many bytes is treated as gas exhaustion.
pub const MEMORY_LIMIT: usize = 1 << 20;

const WRAPPED: u8 = 1;
const BLOCK: u8 = 2;
const CALLDATA: u8 = 4;
const ARITH: u8 = 8;
const STATUS: u8 = 16;
const SLOT: u8 = 32;

/// Value-flow tags carried next to every stack word.
#[derive(Clone, Copy, Default, Debug)]
struct Tag {
    flags: u8,
    wrap_pc: u32,
    arith_pc: u32,
    call: u32,
    slot: u32,
}

impl Tag {
    fn has(&self, f: u8) -> bool {
        self.flags & f != 0
    }

    fn merge(a: Tag, b: Tag) -> Tag {
        let pick = |f: u8, x: u32, y: u32| if a.has(f) { x } else { y };
        Tag {
            flags: (a.flags | b.flags) & !ARITH,
            wrap_pc: pick(WRAPPED, a.wrap_pc, b.wrap_pc),
            arith_pc: 0,
            call: pick(STATUS, a.call, b.call),
            slot: pick(SLOT, a.slot, b.slot),
        }
    }

    fn derived(a: Tag) -> Tag {
        Tag {
            flags: a.flags & !ARITH,
            ..a
        }
    }
}

type Slot = (U256, Tag);

enum Outcome {
    Success(Vec<u8>),
    Revert(Vec<u8>),
    Fault(Exception),
}

struct FrameResult {
    outcome: Outcome,
    gas_left: u64,
}

enum StepErr {
    Fault(Exception),
    Vm(VmError),
}

impl From<Exception> for StepErr {
    fn from(e: Exception) -> Self {
        StepErr::Fault(e)
    }
}

impl From<VmError> for StepErr {
    fn from(e: VmError) -> Self {
        StepErr::Vm(e)
    }
}

enum Control {
    Next,
    Jump(usize),
    Halt(Outcome),
}

struct Message {
    caller: Address,
    address: Address,
    code_address: Address,
    code: Arc<Bytecode>,
    value: U256,
    calldata: Vec<u8>,
    gas: u64,
    depth: u32,
    is_static: bool,
    kind: Option<CallKind>,
}

struct Frame {
    id: u32,
    pc: usize,
    stack: Vec<Slot>,
    memory: Vec<u8>,
    gas: u64,
    return_data: Vec<u8>,
    popped: Vec<U256>,
    pushed: Option<U256>,
}

impl Frame {
    fn pop(&mut self) -> Result<Slot, Exception> {
        let s = self.stack.pop().ok_or(Exception::StackErr)?;
        self.popped.push(s.0);
        Ok(s)
    }

    fn pop_word(&mut self) -> Result<U256, Exception> {
        Ok(self.pop()?.0)
    }

    fn push(&mut self, value: U256, tag: Tag) -> Result<(), Exception> {
        if self.stack.len() >= STACK_LIMIT {
            return Err(Exception::StackErr);
        }
        self.stack.push((value, tag));
        self.pushed = Some(value);
        Ok(())
    }

    fn push_plain(&mut self, value: U256) -> Result<(), Exception> {
        self.push(value, Tag::default())
    }

    /// Expand memory to cover `[offset, offset+size)` and return that range.
    fn mem_range(&mut self, offset: U256, size: U256) -> Result<Range<usize>, Exception> {
        if size.is_zero() {
            return Ok(0..0);
        }
        let limit = U256::from(MEMORY_LIMIT);
        if offset > limit || size > limit {
            return Err(Exception::OutOfGas);
        }
        let (start, len) = (offset.to::<usize>(), size.to::<usize>());
        let end = start + len;
        if end > MEMORY_LIMIT {
            return Err(Exception::OutOfGas);
        }
        if end > self.memory.len() {
            let rounded = end.div_ceil(32) * 32;
            self.memory.resize(rounded, 0);
        }
        Ok(start..end)
    }
}

#[derive(Clone, Copy)]
struct Marks {
    writes: usize,
    transfers: usize,
    selfdestructs: usize,
    overflows: usize,
    logs: usize,
    destructed: usize,
}

struct ActiveFrame {
    address: Address,
    open_call: Option<usize>,
}

pub(super) struct Exec<'a> {
    vm: &'a Vm,
    env: &'a Environment,
    state: WorldState,
    trace: ExecutionTrace,
    observer: Option<&'a mut dyn StepObserver>,
    order: u32,
    next_frame: u32,
    active: Vec<ActiveFrame>,
    reentries: BTreeMap<Address, u32>,
    slot_sources: Vec<U256>,
    destructed: Vec<Address>,
}

fn copy_padded(src: &[u8], offset: U256, dest: &mut [u8]) {
    dest.fill(0);
    if offset >= U256::from(src.len()) {
        return;
    }
    let start = offset.to::<usize>();
    let n = dest.len().min(src.len() - start);
    dest[..n].copy_from_slice(&src[start..start + n]);
}

fn word_to_u64(v: U256) -> u64 {
    if v > U256::from(u64::MAX) {
        u64::MAX
    } else {
        v.to::<u64>()
    }
}

impl<'a> Exec<'a> {
    pub(super) fn run(
        vm: &'a Vm,
        pre: &WorldState,
        to: Address,
        calldata: &[u8],
        env: &'a Environment,
        observer: Option<&'a mut dyn StepObserver>,
    ) -> Result<(ExecutionTrace, WorldState), VmError> {
        if env.gas_limit == 0 {
            return Err(VmError::ZeroGasLimit);
        }
        let mut exec = Exec {
            vm,
            env,
            state: pre.clone(),
            trace: ExecutionTrace::default(),
            observer,
            order: 0,
            next_frame: 0,
            active: Vec::new(),
            reentries: BTreeMap::new(),
            slot_sources: Vec::new(),
            destructed: Vec::new(),
        };
        for (addr, bal) in &env.balance_overrides {
            exec.state.set_balance(*addr, *bal);
        }
        if !exec.state.transfer(env.caller, to, env.call_value) {
            exec.trace.exception = Exception::Revert;
            return Ok((exec.trace, pre.clone()));
        }
        let Some(code) = exec.state.code(&to).cloned() else {
            exec.trace.max_call_depth = 1;
            return Ok((exec.trace, exec.state));
        };
        let result = exec.run_frame(Message {
            caller: env.caller,
            address: to,
            code_address: to,
            code,
            value: env.call_value,
            calldata: calldata.to_vec(),
            gas: env.gas_limit,
            depth: 1,
            is_static: false,
            kind: None,
        })?;
        exec.trace.gas_used = env.gas_limit - result.gas_left;
        match result.outcome {
            Outcome::Success(ret) => {
                for addr in std::mem::take(&mut exec.destructed) {
                    exec.state.accounts.remove(&addr);
                }
                exec.trace.return_data = ret;
                Ok((exec.trace, exec.state))
            }
            Outcome::Revert(ret) => {
                exec.trace.exception = Exception::Revert;
                exec.trace.return_data = ret;
                Ok((exec.trace, pre.clone()))
            }
            Outcome::Fault(e) => {
                exec.trace.exception = e;
                Ok((exec.trace, pre.clone()))
            }
        }
    }

    fn tick(&mut self) -> u32 {
        let o = self.order;
        self.order += 1;
        o
    }

    fn marks(&self) -> Marks {
        Marks {
            writes: self.trace.storage_writes.len(),
            transfers: self.trace.ether_transfers.len(),
            selfdestructs: self.trace.selfdestructs.len(),
            overflows: self.trace.overflows.len(),
            logs: self.trace.logs.len(),
            destructed: self.destructed.len(),
        }
    }

    fn rollback(&mut self, m: Marks) {
        self.trace.storage_writes.truncate(m.writes);
        self.trace.ether_transfers.truncate(m.transfers);
        self.trace.selfdestructs.truncate(m.selfdestructs);
        self.trace.overflows.truncate(m.overflows);
        self.trace.logs.truncate(m.logs);
        self.destructed.truncate(m.destructed);
    }

    fn mark_checked(&mut self, tag: Tag) {
        if tag.has(STATUS) {
            if let Some(c) = self.trace.external_calls.get_mut(tag.call as usize) {
                c.status_checked = true;
            }
        }
    }

    fn run_frame(&mut self, msg: Message) -> Result<FrameResult, VmError> {
        self.trace.max_call_depth = self.trace.max_call_depth.max(msg.depth);
        let reentry_of = if msg.kind == Some(CallKind::DelegateCall) {
            None
        } else {
            self.active
                .iter()
                .find(|f| f.address == msg.address)
                .and_then(|f| f.open_call)
        };
        if let Some(ci) = reentry_of {
            self.trace.external_calls[ci].reentered = true;
        }
        self.active.push(ActiveFrame {
            address: msg.address,
            open_call: None,
        });
        let result = self.interpret(&msg);
        self.active.pop();
        if let (Ok(r), Some(ci)) = (&result, reentry_of) {
            if matches!(r.outcome, Outcome::Success(_)) {
                self.trace.external_calls[ci].reentry_succeeded = true;
            }
        }
        result
    }

    fn interpret(&mut self, msg: &Message) -> Result<FrameResult, VmError> {
        let id = self.next_frame;
        self.next_frame += 1;
        let mut f = Frame {
            id,
            pc: 0,
            stack: Vec::with_capacity(32),
            memory: Vec::new(),
            gas: msg.gas,
            return_data: Vec::new(),
            popped: Vec::with_capacity(8),
            pushed: None,
        };
        let code = msg.code.clone();
        loop {
            if f.pc >= code.len() {
                return Ok(FrameResult {
                    outcome: Outcome::Success(Vec::new()),
                    gas_left: f.gas,
                });
            }
            let op = code.op_at(f.pc);
            if !is_supported(op) {
                return Err(VmError::UnknownOpcode {
                    address: msg.code_address,
                    pc: f.pc,
                    opcode: op,
                });
            }
            self.trace.instr_sites.push(InstrSite {
                address: msg.code_address,
                pc: f.pc as u32,
                opcode: op,
            });
            let cost = gas_cost(op);
            if cost > f.gas {
                return Ok(FrameResult {
                    outcome: Outcome::Fault(Exception::OutOfGas),
                    gas_left: 0,
                });
            }
            f.gas -= cost;
            f.popped.clear();
            f.pushed = None;
            match self.step(&mut f, msg, op, &code) {
                Ok(control) => {
                    if let Some(obs) = self.observer.as_deref_mut() {
                        obs.on_step(&StepEvent {
                            depth: msg.depth,
                            frame: f.id,
                            address: msg.address,
                            code_address: msg.code_address,
                            pc: f.pc as u32,
                            opcode: op,
                            inputs: &f.popped,
                            output: f.pushed,
                        });
                    }
                    match control {
                        Control::Next => f.pc += 1 + immediate_len(op),
                        Control::Jump(dest) => f.pc = dest,
                        Control::Halt(outcome) => {
                            return Ok(FrameResult {
                                outcome,
                                gas_left: f.gas,
                            })
                        }
                    }
                }
                Err(StepErr::Fault(e)) => {
                    return Ok(FrameResult {
                        outcome: Outcome::Fault(e),
                        gas_left: 0,
                    })
                }
                Err(StepErr::Vm(e)) => return Err(e),
            }
        }
    }

    fn step(&mut self, f: &mut Frame, msg: &Message, op: u8, code: &Bytecode) -> Result<Control, StepErr> {
        let pc = f.pc as u32;
        match op {
            STOP => return Ok(Control::Halt(Outcome::Success(Vec::new()))),
            _ if arith::is_binary(op) => {
                let (a, ta) = f.pop()?;
                let (b, tb) = f.pop()?;
                let r = arith::binary(op, a, b);
                let mut tag = Tag::merge(ta, tb);
                if matches!(op, ADD | SUB | MUL) {
                    if arith::wraps(op, a, b) && !tag.has(WRAPPED) {
                        tag.flags |= WRAPPED;
                        tag.wrap_pc = pc;
                    }
                    tag.flags |= ARITH;
                    tag.arith_pc = pc;
                } else if op == AND {
                    // A narrow-width mask applied to an arithmetic result that
                    // exceeded the width is a wrap in that width.
                    for (mask, other, other_tag) in [(a, b, tb), (b, a, ta)] {
                        if let Some(_width) = arith::low_mask_width(mask) {
                            if other_tag.has(ARITH) && other > mask && !tag.has(WRAPPED) {
                                tag.flags |= WRAPPED;
                                tag.wrap_pc = other_tag.arith_pc;
                            }
                        }
                    }
                }
                f.push(r, tag)?;
            }
            ISZERO | NOT => {
                let (a, ta) = f.pop()?;
                f.push(arith::unary(op, a), Tag::derived(ta))?;
            }
            KECCAK256 => {
                let off = f.pop_word()?;
                let size = f.pop_word()?;
                let range = f.mem_range(off, size)?;
                let h = keccak256(&f.memory[range]);
                f.push_plain(U256::from_be_bytes(h))?;
            }
            ADDRESS => f.push_plain(msg.address.to_word())?,
            BALANCE => {
                let a = f.pop_word()?;
                f.push_plain(self.state.balance(&Address::from_word(a)))?;
            }
            ORIGIN => f.push_plain(self.env.caller.to_word())?,
            CALLER => f.push_plain(msg.caller.to_word())?,
            CALLVALUE => f.push_plain(msg.value)?,
            CALLDATALOAD => {
                let off = f.pop_word()?;
                let mut buf = [0u8; 32];
                copy_padded(&msg.calldata, off, &mut buf);
                f.push(
                    U256::from_be_bytes(buf),
                    Tag {
                        flags: CALLDATA,
                        ..Tag::default()
                    },
                )?;
            }
            CALLDATASIZE => f.push_plain(U256::from(msg.calldata.len()))?,
            CALLDATACOPY => {
                let dest = f.pop_word()?;
                let off = f.pop_word()?;
                let size = f.pop_word()?;
                let range = f.mem_range(dest, size)?;
                copy_padded(&msg.calldata, off, &mut f.memory[range]);
            }
            EXTCODESIZE => {
                let a = Address::from_word(f.pop_word()?);
                let size = match self.env.ext_code_size_override.get(&a) {
                    Some(s) => *s,
                    None => self.state.code(&a).map(|c| c.len() as u64).unwrap_or(0),
                };
                f.push_plain(U256::from(size))?;
            }
            RETURNDATASIZE => {
                let size = self
                    .env
                    .return_data_size_override
                    .unwrap_or(f.return_data.len() as u64);
                f.push_plain(U256::from(size))?;
            }
            RETURNDATACOPY => {
                let dest = f.pop_word()?;
                let off = f.pop_word()?;
                let size = f.pop_word()?;
                let available = self
                    .env
                    .return_data_size_override
                    .unwrap_or(f.return_data.len() as u64);
                let end = off.checked_add(size).ok_or(Exception::InvalidOp)?;
                if end > U256::from(available) {
                    return Err(Exception::InvalidOp.into());
                }
                let range = f.mem_range(dest, size)?;
                let data = f.return_data.clone();
                copy_padded(&data, off, &mut f.memory[range]);
            }
            TIMESTAMP | NUMBER => {
                let v = if op == TIMESTAMP {
                    self.env.timestamp
                } else {
                    self.env.block_number
                };
                f.push(
                    U256::from(v),
                    Tag {
                        flags: BLOCK,
                        ..Tag::default()
                    },
                )?;
            }
            GASLIMIT => f.push_plain(U256::from(self.env.gas_limit))?,
            POP => {
                f.pop()?;
            }
            MLOAD => {
                let off = f.pop_word()?;
                let range = f.mem_range(off, U256::from(32u8))?;
                let v = U256::from_be_slice(&f.memory[range]);
                f.push_plain(v)?;
            }
            MSTORE => {
                let off = f.pop_word()?;
                let (v, tv) = f.pop()?;
                self.mark_checked(tv);
                let range = f.mem_range(off, U256::from(32u8))?;
                f.memory[range].copy_from_slice(&v.to_be_bytes::<32>());
            }
            MSTORE8 => {
                let off = f.pop_word()?;
                let (v, tv) = f.pop()?;
                self.mark_checked(tv);
                let range = f.mem_range(off, U256::from(1u8))?;
                f.memory[range.start] = v.byte(0);
            }
            SLOAD => {
                let slot = f.pop_word()?;
                let value = self.state.sload(&msg.address, slot);
                let order = self.tick();
                self.trace.storage_reads.push(StorageAccess {
                    order,
                    frame: f.id,
                    address: msg.address,
                    slot,
                    value,
                    pc,
                });
                let idx = self.slot_sources.len() as u32;
                self.slot_sources.push(slot);
                f.push(
                    value,
                    Tag {
                        flags: SLOT,
                        slot: idx,
                        ..Tag::default()
                    },
                )?;
            }
            SSTORE => {
                if msg.is_static {
                    return Err(Exception::InvalidOp.into());
                }
                let slot = f.pop_word()?;
                let (value, tv) = f.pop()?;
                self.mark_checked(tv);
                if tv.has(WRAPPED) {
                    self.trace.overflows.push(OverflowEffect {
                        address: msg.address,
                        wrap_pc: tv.wrap_pc,
                        sink_pc: pc,
                        sink: OverflowSink::Storage,
                    });
                }
                let order = self.tick();
                self.trace.storage_writes.push(StorageAccess {
                    order,
                    frame: f.id,
                    address: msg.address,
                    slot,
                    value,
                    pc,
                });
                self.state.sstore(msg.address, slot, value);
            }
            JUMP => {
                let (dest, td) = f.pop()?;
                self.mark_checked(td);
                return Ok(Control::Jump(valid_dest(code, dest)?));
            }
            JUMPI => {
                let (dest, td) = f.pop()?;
                let (cond, tc) = f.pop()?;
                self.mark_checked(td);
                self.mark_checked(tc);
                let taken = !cond.is_zero();
                let target = if taken { Some(valid_dest(code, dest)?) } else { None };
                self.trace.branch_edges.push(BranchEdge {
                    address: msg.code_address,
                    pc,
                    taken,
                });
                if tc.has(BLOCK) {
                    self.trace.block_branches.push(BlockDependentBranch {
                        address: msg.code_address,
                        pc,
                    });
                }
                if let Some(t) = target {
                    return Ok(Control::Jump(t));
                }
            }
            PC => f.push_plain(U256::from(pc))?,
            GAS => f.push_plain(U256::from(f.gas))?,
            JUMPDEST => {}
            PUSH1..=PUSH32 => {
                let n = immediate_len(op);
                let bytes = code.bytes();
                let start = (f.pc + 1).min(bytes.len());
                let end = (f.pc + 1 + n).min(bytes.len());
                let mut buf = [0u8; 32];
                // Immediates running past the end of code read as zero bytes.
                buf[32 - n..32 - n + (end - start)].copy_from_slice(&bytes[start..end]);
                f.push_plain(U256::from_be_bytes(buf))?;
            }
            DUP1..=DUP16 => {
                let n = (op - DUP1 + 1) as usize;
                if f.stack.len() < n {
                    return Err(Exception::StackErr.into());
                }
                let s = f.stack[f.stack.len() - n];
                f.push(s.0, s.1)?;
            }
            SWAP1..=SWAP16 => {
                let n = (op - SWAP1 + 1) as usize;
                let len = f.stack.len();
                if len < n + 1 {
                    return Err(Exception::StackErr.into());
                }
                f.stack.swap(len - 1, len - 1 - n);
            }
            LOG0..=LOG4 => {
                if msg.is_static {
                    return Err(Exception::InvalidOp.into());
                }
                let off = f.pop_word()?;
                let size = f.pop_word()?;
                let mut topics = Vec::new();
                for _ in 0..(op - LOG0) {
                    topics.push(f.pop_word()?);
                }
                let range = f.mem_range(off, size)?;
                self.trace.logs.push(LogRecord {
                    address: msg.address,
                    topics,
                    data: f.memory[range].to_vec(),
                });
            }
            RETURN | REVERT => {
                let off = f.pop_word()?;
                let size = f.pop_word()?;
                let range = f.mem_range(off, size)?;
                let data = f.memory[range].to_vec();
                return Ok(Control::Halt(if op == RETURN {
                    Outcome::Success(data)
                } else {
                    Outcome::Revert(data)
                }));
            }
            INVALID => return Err(Exception::AssertFail.into()),
            SELFDESTRUCT => {
                if msg.is_static {
                    return Err(Exception::InvalidOp.into());
                }
                let beneficiary = Address::from_word(f.pop_word()?);
                let amount = self.state.balance(&msg.address);
                self.state.set_balance(msg.address, U256::ZERO);
                if beneficiary != msg.address {
                    let b = self.state.balance(&beneficiary);
                    self.state.set_balance(beneficiary, b.saturating_add(amount));
                }
                if !amount.is_zero() {
                    self.trace.ether_transfers.push(EtherTransfer {
                        from: msg.address,
                        to: beneficiary,
                        amount,
                    });
                }
                self.trace.selfdestructs.push(SelfDestructEvent {
                    address: msg.address,
                    beneficiary,
                    pc,
                });
                self.destructed.push(msg.address);
                return Ok(Control::Halt(Outcome::Success(Vec::new())));
            }
            CALL | DELEGATECALL | STATICCALL => self.call_op(f, msg, op)?,
            _ => {
                return Err(VmError::UnknownOpcode {
                    address: msg.code_address,
                    pc: f.pc,
                    opcode: op,
                }
                .into())
            }
        }
        Ok(Control::Next)
    }

    fn call_op(&mut self, f: &mut Frame, msg: &Message, op: u8) -> Result<(), StepErr> {
        let pc = f.pc as u32;
        let gas_req = f.pop_word()?;
        let (target_word, target_tag) = f.pop()?;
        let (value, value_tag) = if op == CALL {
            f.pop()?
        } else {
            (U256::ZERO, Tag::default())
        };
        let in_off = f.pop_word()?;
        let in_size = f.pop_word()?;
        let out_off = f.pop_word()?;
        let out_size = f.pop_word()?;
        if op == CALL && msg.is_static && !value.is_zero() {
            return Err(Exception::InvalidOp.into());
        }
        let in_range = f.mem_range(in_off, in_size)?;
        let out_range = f.mem_range(out_off, out_size)?;
        let calldata = f.memory[in_range].to_vec();
        let target = Address::from_word(target_word);
        let kind = match op {
            CALL => CallKind::Call,
            DELEGATECALL => CallKind::DelegateCall,
            _ => CallKind::StaticCall,
        };
        if value_tag.has(WRAPPED) {
            self.trace.overflows.push(OverflowEffect {
                address: msg.address,
                wrap_pc: value_tag.wrap_pc,
                sink_pc: pc,
                sink: OverflowSink::Value,
            });
        }
        let call_idx = self.trace.external_calls.len();
        let order_start = self.tick();
        let is_delegate = kind == CallKind::DelegateCall;
        self.trace.external_calls.push(ExternalCall {
            kind,
            from: msg.address,
            target,
            value,
            success: false,
            status: U256::ZERO,
            pc,
            depth: msg.depth,
            frame: f.id,
            order_start,
            order_end: order_start,
            status_checked: false,
            scripted: false,
            target_from_calldata: is_delegate && target_tag.has(CALLDATA),
            target_slot: (is_delegate && target_tag.has(SLOT))
                .then(|| self.slot_sources[target_tag.slot as usize]),
            reentered: false,
            reentry_succeeded: false,
        });
        // A caller keeps 1/64 of its gas so it can act on a failed callee.
        let forwarded = word_to_u64(gas_req).min(f.gas - f.gas / 64);
        let forced_failure = matches!(self.env.call_return_override, Some(v) if v.is_zero());
        let (success, ret, spent) = if msg.depth + 1 > CALL_DEPTH_LIMIT
            || forced_failure
            || (op == CALL && self.state.balance(&msg.address) < value)
        {
            (false, Vec::new(), 0)
        } else {
            if let Some(top) = self.active.last_mut() {
                top.open_call = Some(call_idx);
            }
            let r = self.enter_call(kind, msg, target, value, calldata, forwarded);
            if let Some(top) = self.active.last_mut() {
                top.open_call = None;
            }
            r?
        };
        f.gas -= spent.min(f.gas);
        let order_end = self.tick();
        let status = if success {
            match self.env.call_return_override {
                Some(v) if !v.is_zero() => v,
                _ => U256::from(1u8),
            }
        } else {
            U256::ZERO
        };
        let record = &mut self.trace.external_calls[call_idx];
        record.success = success;
        record.status = status;
        record.order_end = order_end;
        let n = out_range.len().min(ret.len());
        f.memory[out_range.start..out_range.start + n].copy_from_slice(&ret[..n]);
        f.return_data = ret;
        f.push(
            status,
            Tag {
                flags: STATUS,
                call: call_idx as u32,
                ..Tag::default()
            },
        )?;
        Ok(())
    }

    /// Run a nested call with rollback on failure. Returns (success, return data, gas spent).
    fn enter_call(
        &mut self,
        kind: CallKind,
        caller: &Message,
        target: Address,
        value: U256,
        calldata: Vec<u8>,
        gas: u64,
    ) -> Result<(bool, Vec<u8>, u64), VmError> {
        let snapshot = self.state.clone();
        let marks = self.marks();
        if kind == CallKind::Call && !value.is_zero() {
            self.state.transfer(caller.address, target, value);
            self.trace.ether_transfers.push(EtherTransfer {
                from: caller.address,
                to: target,
                amount: value,
            });
        }
        let (address, callee_caller, callee_value, is_static) = match kind {
            CallKind::Call => (target, caller.address, value, caller.is_static),
            CallKind::StaticCall => (target, caller.address, U256::ZERO, true),
            CallKind::DelegateCall => (caller.address, caller.caller, caller.value, caller.is_static),
        };
        let (success, ret, spent) = if let Some(code) = self.state.code(&target).cloned() {
            let r = self.run_frame(Message {
                caller: callee_caller,
                address,
                code_address: target,
                code,
                value: callee_value,
                calldata,
                gas,
                depth: caller.depth + 1,
                is_static,
                kind: Some(kind),
            })?;
            let spent = gas - r.gas_left;
            match r.outcome {
                Outcome::Success(d) => (true, d, spent),
                Outcome::Revert(d) => (false, d, spent),
                Outcome::Fault(_) => (false, Vec::new(), spent),
            }
        } else if kind == CallKind::Call && self.vm.scripts.contains_key(&target) {
            let left = self.run_script(target, caller.address, caller.depth + 1, gas)?;
            (true, Vec::new(), gas - left)
        } else {
            (true, Vec::new(), 0)
        };
        if !success {
            self.state = snapshot;
            self.rollback(marks);
        }
        Ok((success, ret, spent))
    }

    /// Scripted counterparty: on receipt, replay its calls (bounded per transaction).
    fn run_script(&mut self, stub: Address, contract: Address, depth: u32, gas: u64) -> Result<u64, VmError> {
        let script = self.vm.scripts[&stub].clone();
        let used = self.reentries.entry(stub).or_insert(0);
        if *used >= script.max_reentries {
            return Ok(gas);
        }
        *used += 1;
        self.trace.max_call_depth = self.trace.max_call_depth.max(depth);
        let frame = self.next_frame;
        self.next_frame += 1;
        let mut gas_left = gas;
        let pseudo = Message {
            caller: contract,
            address: stub,
            code_address: stub,
            code: Arc::new(Bytecode::default()),
            value: U256::ZERO,
            calldata: Vec::new(),
            gas,
            depth,
            is_static: false,
            kind: Some(CallKind::Call),
        };
        self.active.push(ActiveFrame {
            address: stub,
            open_call: None,
        });
        for call in &script.calls {
            let target = call.target.unwrap_or(contract);
            let call_idx = self.trace.external_calls.len();
            let order_start = self.tick();
            self.trace.external_calls.push(ExternalCall {
                kind: CallKind::Call,
                from: stub,
                target,
                value: call.value,
                success: false,
                status: U256::ZERO,
                pc: 0,
                depth,
                frame,
                order_start,
                order_end: order_start,
                status_checked: true,
                scripted: true,
                target_from_calldata: false,
                target_slot: None,
                reentered: false,
                reentry_succeeded: false,
            });
            let forwarded = call.gas.unwrap_or(gas_left).min(gas_left);
            let (ok, spent) = if depth + 1 > CALL_DEPTH_LIMIT || self.state.balance(&stub) < call.value {
                (false, 0)
            } else {
                if let Some(top) = self.active.last_mut() {
                    top.open_call = Some(call_idx);
                }
                let (ok, _, spent) =
                    self.enter_call(CallKind::Call, &pseudo, target, call.value, call.calldata.clone(), forwarded)?;
                (ok, spent)
            };
            gas_left -= spent.min(gas_left);
            let order_end = self.tick();
            let rec = &mut self.trace.external_calls[call_idx];
            rec.success = ok;
            rec.status = if ok { U256::from(1u8) } else { U256::ZERO };
            rec.order_end = order_end;
        }
        self.active.pop();
        Ok(gas_left)
    }
}

fn valid_dest(code: &Bytecode, dest: U256) -> Result<usize, Exception> {
    if dest >= U256::from(code.len()) {
        return Err(Exception::InvalidOp);
    }
    let d = dest.to::<usize>();
    if code.is_jumpdest(d) {
        Ok(d)
    } else {
        Err(Exception::InvalidOp)
    }
}
