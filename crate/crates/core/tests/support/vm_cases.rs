//! Hand-built opcode programs with hand-derived expected traces.

use std::collections::BTreeMap;

use seqfuzz::primitives::{ether, Address, U256};
use seqfuzz::vm::asm::assemble;
use seqfuzz::vm::*;

pub const ME: Address = Address::repeat_byte(0xcc);
pub const OTHER: Address = Address::repeat_byte(0xdd);
pub const SENDER: Address = Address::repeat_byte(0x11);
pub const EOA: Address = Address::repeat_byte(0x33);

pub struct Case {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

pub fn world(code: &str) -> WorldState {
    let mut s = WorldState::new();
    s.insert(ME, Account::with_code(assemble(code).expect("asm"), U256::ZERO));
    s.insert(SENDER, Account::with_balance(ether(100)));
    s
}

pub fn env() -> Environment {
    Environment::with_caller(SENDER)
}

pub struct Run {
    pub trace: ExecutionTrace,
    pub pre: WorldState,
    pub post: WorldState,
}

pub fn exec_in(vm: &Vm, pre: WorldState, calldata: &[u8], env: &Environment) -> Run {
    let (trace, post) = vm.execute_transaction(&pre, ME, calldata, env).expect("vm error");
    Run { trace, pre, post }
}

pub fn exec(code: &str) -> Run {
    exec_in(&Vm::new(), world(code), &[], &env())
}

fn w(x: u64) -> U256 {
    U256::from(x)
}

fn slot(s: &WorldState, addr: Address, n: u64) -> U256 {
    s.sload(&addr, w(n))
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr) => {{
        let (a, b) = (&$a, &$b);
        if a != b {
            return Err(format!("{} = {:?}, expected {:?}", stringify!($a), a, b));
        }
    }};
}

/// Evaluate `body` (which leaves one word on the stack), store it at slot 0
/// and return the stored value.
fn eval(body: &str) -> Result<U256, String> {
    let r = exec(&format!("{body} push 0 sstore stop"));
    ensure_eq!(r.trace.exception, Exception::None);
    Ok(slot(&r.post, ME, 0))
}

fn neg(x: u64) -> U256 {
    w(x).wrapping_neg()
}

fn stop_only() -> Result<(), String> {
    let r = exec("stop");
    ensure_eq!(r.trace.instr_sites.len(), 1);
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(r.post, r.pre);
    ensure_eq!(r.trace.gas_used, 1);
    Ok(())
}

fn sstore_42() -> Result<(), String> {
    let r = exec("push1 0x2a push1 0x00 sstore stop");
    ensure_eq!(slot(&r.post, ME, 0), w(42));
    let writes: Vec<_> = r.trace.storage_writes.iter().map(|a| (a.order, a.address, a.slot)).collect();
    ensure_eq!(writes, vec![(0, ME, w(0))]);
    ensure_eq!(r.trace.gas_used, 1 + 1 + 100 + 1);
    Ok(())
}

fn revert_rolls_back() -> Result<(), String> {
    let r = exec("push1 0x00 push1 0x00 revert");
    ensure_eq!(r.trace.exception, Exception::Revert);
    ensure_eq!(r.post, r.pre);
    let r = exec("push 9 push 0 sstore push 0 push 0 revert");
    ensure_eq!(r.trace.exception, Exception::Revert);
    ensure_eq!(r.post, r.pre);
    Ok(())
}

fn add_sub_order() -> Result<(), String> {
    ensure_eq!(eval("push 2 push 3 add")?, w(5));
    // top of stack is the left operand
    ensure_eq!(eval("push 3 push 10 sub")?, w(7));
    ensure_eq!(eval("push 1 push 0 sub")?, U256::MAX);
    Ok(())
}

fn mul_div_mod() -> Result<(), String> {
    ensure_eq!(eval("push 6 push 7 mul")?, w(42));
    ensure_eq!(eval("push 4 push 17 div")?, w(4));
    ensure_eq!(eval("push 0 push 17 div")?, w(0));
    ensure_eq!(eval("push 5 push 17 mod")?, w(2));
    ensure_eq!(eval("push 0 push 17 mod")?, w(0));
    ensure_eq!(eval("push 10 push 2 exp")?, w(1024));
    Ok(())
}

fn signed_division() -> Result<(), String> {
    // -8 / 2 = -4
    ensure_eq!(eval("push 2 push 8 push 0 sub sdiv")?, neg(4));
    Ok(())
}

fn comparisons() -> Result<(), String> {
    ensure_eq!(eval("push 2 push 1 lt")?, w(1));
    ensure_eq!(eval("push 2 push 1 gt")?, w(0));
    ensure_eq!(eval("push 1 push 0 sub push 0 slt")?, w(0)); // 0 < -1 ?
    ensure_eq!(eval("push 0 push 1 push 0 sub slt")?, w(1)); // -1 < 0
    ensure_eq!(eval("push 0 push 1 push 0 sub sgt")?, w(0));
    ensure_eq!(eval("push 5 push 5 eq")?, w(1));
    ensure_eq!(eval("push 0 iszero")?, w(1));
    ensure_eq!(eval("push 7 iszero")?, w(0));
    Ok(())
}

fn bitwise() -> Result<(), String> {
    ensure_eq!(eval("push 0x0f push 0x3c and")?, w(0x0c));
    ensure_eq!(eval("push 0x0f push 0x30 or")?, w(0x3f));
    ensure_eq!(eval("push 0x0f push 0x3c xor")?, w(0x33));
    ensure_eq!(eval("push 0 not")?, U256::MAX);
    ensure_eq!(eval("push 1 push 8 shl")?, w(256));
    ensure_eq!(eval("push 256 push 8 shr")?, w(1));
    ensure_eq!(eval("push 0xabcd push 30 byte")?, w(0xab));
    Ok(())
}

fn keccak_of_zero_word() -> Result<(), String> {
    let expect = U256::from_str_radix(
        "290decd9548b62a8d60345a988386fc84ba6bc95484008f6362f93160ef3e563",
        16,
    )
    .unwrap();
    ensure_eq!(eval("push 32 push 0 keccak256")?, expect);
    Ok(())
}

fn calldata_ops() -> Result<(), String> {
    let code = "push 0 calldataload push 0 sstore calldatasize push 1 sstore \
                push 4 push 1 push 0 calldatacopy push 0 mload push 2 sstore stop";
    let r = exec_in(&Vm::new(), world(code), &[0xaa, 0xbb], &env());
    ensure_eq!(slot(&r.post, ME, 0), w(0xaabb) << 240);
    ensure_eq!(slot(&r.post, ME, 1), w(2));
    ensure_eq!(slot(&r.post, ME, 2), w(0xbb) << 248);
    Ok(())
}

fn context_ops() -> Result<(), String> {
    let code = "caller push 0 sstore origin push 1 sstore callvalue push 2 sstore \
                address push 3 sstore timestamp push 4 sstore number push 5 sstore \
                gaslimit push 6 sstore stop";
    let mut e = env();
    e.call_value = w(5);
    e.timestamp = 1234;
    e.block_number = 77;
    e.gas_limit = 90_000;
    let r = exec_in(&Vm::new(), world(code), &[], &e);
    ensure_eq!(slot(&r.post, ME, 0), SENDER.to_word());
    ensure_eq!(slot(&r.post, ME, 1), SENDER.to_word());
    ensure_eq!(slot(&r.post, ME, 2), w(5));
    ensure_eq!(slot(&r.post, ME, 3), ME.to_word());
    ensure_eq!(slot(&r.post, ME, 4), w(1234));
    ensure_eq!(slot(&r.post, ME, 5), w(77));
    ensure_eq!(slot(&r.post, ME, 6), w(90_000));
    ensure_eq!(r.post.balance(&ME), w(5));
    Ok(())
}

fn gas_and_pc() -> Result<(), String> {
    // GAS is charged before it reads the counter.
    ensure_eq!(eval("gas")?, w(DEFAULT_GAS_LIMIT - 1));
    ensure_eq!(eval("push 0 pop pc")?, w(3));
    Ok(())
}

fn memory_ops() -> Result<(), String> {
    ensure_eq!(eval("push 0x1234 push 0 mstore push 0 mload")?, w(0x1234));
    ensure_eq!(eval("push 0x1234 push 31 mstore8 push 0 mload")?, w(0x34));
    // unaligned read straddles two words
    ensure_eq!(eval("push 0xff push 0 mstore push 1 mload")?, w(0xff) << 8);
    Ok(())
}

fn dup_swap() -> Result<(), String> {
    ensure_eq!(eval("push 1 push 2 dup2")?, w(1));
    ensure_eq!(eval("push 1 push 2 swap1")?, w(1));
    ensure_eq!(eval("push 1 push 2 push 3 swap2 pop pop")?, w(3));
    Ok(())
}

fn stack_underflow() -> Result<(), String> {
    let r = exec("push 1 push 0 sstore add");
    ensure_eq!(r.trace.exception, Exception::StackErr);
    ensure_eq!(r.post, r.pre);
    let r = exec("push 1 dup2");
    ensure_eq!(r.trace.exception, Exception::StackErr);
    Ok(())
}

fn stack_overflow() -> Result<(), String> {
    let r = exec("top: push 1 push @top jump");
    ensure_eq!(r.trace.exception, Exception::StackErr);
    // 1023 full iterations; the next PUSH2 would be the 1025th word
    ensure_eq!(r.trace.instr_sites.len(), 1023 * 4 + 3);
    Ok(())
}

fn bad_jumps() -> Result<(), String> {
    ensure_eq!(exec("push 3 jump stop").trace.exception, Exception::InvalidOp);
    // offset 1 is inside the PUSH2 immediate 0x5b5b
    ensure_eq!(exec("push 1 jump push2 0x5b5b").trace.exception, Exception::InvalidOp);
    ensure_eq!(exec("push 1 push 100 jumpi").trace.exception, Exception::InvalidOp);
    // not-taken JUMPI ignores its destination
    ensure_eq!(exec("push 0 push 100 jumpi stop").trace.exception, Exception::None);
    Ok(())
}

fn jumpi_edges() -> Result<(), String> {
    let r = exec("push 1 push @a jumpi stop a: push 0 push @b jumpi stop b: stop");
    let edges: Vec<_> = r.trace.branch_edges.iter().map(|e| (e.pc, e.taken)).collect();
    ensure_eq!(edges, vec![(5, true), (13, false)]);
    for e in &r.trace.branch_edges {
        ensure!(
            r.trace.instr_sites.iter().any(|s| s.pc == e.pc && s.opcode == opcode::JUMPI),
            "edge without JUMPI site"
        );
    }
    Ok(())
}

fn invalid_is_assert() -> Result<(), String> {
    let r = exec("push 1 push 0 sstore invalid");
    ensure_eq!(r.trace.exception, Exception::AssertFail);
    ensure_eq!(r.post, r.pre);
    ensure_eq!(r.trace.instr_sites.last().map(|s| s.opcode), Some(opcode::INVALID));
    Ok(())
}

fn out_of_gas() -> Result<(), String> {
    let mut e = env();
    e.gas_limit = 3;
    let r = exec_in(&Vm::new(), world("push 1 push 0 sstore stop"), &[], &e);
    ensure_eq!(r.trace.exception, Exception::OutOfGas);
    ensure_eq!(r.post, r.pre);
    ensure_eq!(r.trace.gas_used, 3);
    ensure_eq!(r.trace.storage_writes.len(), 0);
    Ok(())
}

fn out_of_gas_boundary() -> Result<(), String> {
    let mut e = env();
    e.gas_limit = 3;
    let r = exec_in(&Vm::new(), world("push 1 pop stop"), &[], &e);
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(r.trace.gas_used, 3);
    e.gas_limit = 2;
    let r = exec_in(&Vm::new(), world("push 1 pop stop"), &[], &e);
    ensure_eq!(r.trace.exception, Exception::OutOfGas);
    Ok(())
}

fn sload_cost() -> Result<(), String> {
    let r = exec("push 0 sload stop");
    ensure_eq!(r.trace.gas_used, 1 + 20 + 1);
    ensure_eq!(r.trace.storage_reads.len(), 1);
    Ok(())
}

fn memory_cap() -> Result<(), String> {
    let r = exec("push 1 push 0x100000 mstore stop");
    ensure_eq!(r.trace.exception, Exception::OutOfGas);
    let r = exec("push 1 push 0xfffe0 mstore stop");
    ensure_eq!(r.trace.exception, Exception::None);
    Ok(())
}

fn logs_recorded() -> Result<(), String> {
    let r = exec("push 0xaa push 0 mstore8 push 7 push 1 push 0 log1 stop");
    ensure_eq!(r.trace.logs.len(), 1);
    ensure_eq!(r.trace.logs[0].topics, vec![w(7)]);
    ensure_eq!(r.trace.logs[0].data, vec![0xaa]);
    Ok(())
}

fn return_data() -> Result<(), String> {
    let r = exec("push 0x2a push 0 mstore push 32 push 0 return");
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(U256::from_be_slice(&r.trace.return_data), w(42));
    Ok(())
}

/// CALL with `value` to `target`, storing the status at slot 0.
fn call_asm(target: Address, value: u64) -> String {
    format!("push 0 push 0 push 0 push 0 push {value} push {target} gas call push 0 sstore stop")
}

fn call_to_eoa_moves_value() -> Result<(), String> {
    let mut pre = world(&call_asm(EOA, 5));
    pre.set_balance(ME, w(10));
    let r = exec_in(&Vm::new(), pre, &[], &env());
    ensure_eq!(slot(&r.post, ME, 0), w(1));
    ensure_eq!(r.post.balance(&EOA), w(5));
    ensure_eq!(r.post.balance(&ME), w(5));
    ensure_eq!(r.trace.ether_transfers.len(), 1);
    ensure_eq!(r.trace.external_calls.len(), 1);
    ensure!(r.trace.external_calls[0].success, "call failed");
    ensure_eq!(r.trace.max_call_depth, 1);
    Ok(())
}

fn call_without_funds_fails() -> Result<(), String> {
    let r = exec(&call_asm(EOA, 5));
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(slot(&r.post, ME, 0), w(0));
    ensure_eq!(r.trace.ether_transfers.len(), 0);
    Ok(())
}

fn nested_call_writes_callee() -> Result<(), String> {
    let mut pre = world(&call_asm(OTHER, 0));
    pre.insert(OTHER, Account::with_code(assemble("push 9 push 1 sstore stop").unwrap(), U256::ZERO));
    let r = exec_in(&Vm::new(), pre, &[], &env());
    ensure_eq!(slot(&r.post, OTHER, 1), w(9));
    ensure_eq!(slot(&r.post, ME, 0), w(1));
    ensure_eq!(r.trace.max_call_depth, 2);
    ensure_eq!(r.trace.storage_writes.len(), 2);
    Ok(())
}

fn nested_revert_is_contained() -> Result<(), String> {
    let mut pre = world(&call_asm(OTHER, 3));
    pre.set_balance(ME, w(10));
    pre.insert(
        OTHER,
        Account::with_code(assemble("push 9 push 1 sstore push 0 push 0 revert").unwrap(), U256::ZERO),
    );
    let r = exec_in(&Vm::new(), pre, &[], &env());
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(slot(&r.post, OTHER, 1), w(0));
    ensure_eq!(r.post.balance(&ME), w(10));
    ensure!(r.trace.storage_writes.iter().all(|a| a.address == ME), "callee write survived");
    ensure_eq!(r.trace.ether_transfers.len(), 0);
    ensure_eq!(slot(&r.post, ME, 0), w(0));
    Ok(())
}

fn delegatecall_uses_caller_storage() -> Result<(), String> {
    let code = format!("push 0 push 0 push 0 push 0 push {OTHER} gas delegatecall pop stop");
    let mut pre = world(&code);
    pre.insert(OTHER, Account::with_code(assemble("caller push 4 sstore stop").unwrap(), U256::ZERO));
    let r = exec_in(&Vm::new(), pre, &[], &env());
    ensure_eq!(slot(&r.post, ME, 4), SENDER.to_word());
    ensure_eq!(slot(&r.post, OTHER, 4), w(0));
    ensure_eq!(r.trace.external_calls[0].kind, CallKind::DelegateCall);
    Ok(())
}

fn staticcall_forbids_writes() -> Result<(), String> {
    let code = format!("push 0 push 0 push 0 push 0 push {OTHER} gas staticcall push 0 sstore stop");
    let mut pre = world(&code);
    pre.insert(OTHER, Account::with_code(assemble("push 1 push 1 sstore stop").unwrap(), U256::ZERO));
    let r = exec_in(&Vm::new(), pre, &[], &env());
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(slot(&r.post, ME, 0), w(0));
    ensure_eq!(slot(&r.post, OTHER, 1), w(0));
    Ok(())
}

fn call_depth_limit() -> Result<(), String> {
    // Each frame counts itself in slot 0 and then calls itself.
    let code = format!(
        "push 0 sload push 1 add push 0 sstore \
         push 0 push 0 push 0 push 0 push 0 push {ME} gas call pop stop"
    );
    let mut e = env();
    e.gas_limit = MAX_GAS_LIMIT;
    let r = exec_in(&Vm::new(), world(&code), &[], &e);
    ensure_eq!(r.trace.exception, Exception::None);
    ensure_eq!(r.trace.max_call_depth, CALL_DEPTH_LIMIT);
    ensure_eq!(slot(&r.post, ME, 0), w(CALL_DEPTH_LIMIT as u64));
    ensure!(!r.trace.external_calls.last().unwrap().success, "deepest call should fail");
    Ok(())
}

fn selfdestruct_removes_account() -> Result<(), String> {
    let mut pre = world(&format!("push {EOA} selfdestruct"));
    pre.set_balance(ME, w(50));
    let r = exec_in(&Vm::new(), pre, &[], &env());
    ensure_eq!(r.trace.selfdestructs.len(), 1);
    ensure_eq!(r.post.balance(&EOA), w(50));
    ensure!(r.post.account(&ME).is_none(), "account still present");
    Ok(())
}

fn balance_override() -> Result<(), String> {
    let mut e = env();
    e.balance_overrides = BTreeMap::from([(SENDER, w(3))]);
    e.call_value = w(3);
    let r = exec_in(&Vm::new(), world("caller balance push 0 sstore stop"), &[], &e);
    ensure_eq!(slot(&r.post, ME, 0), w(0));
    ensure_eq!(r.post.balance(&ME), w(3));
    Ok(())
}

fn insufficient_value_reverts() -> Result<(), String> {
    let mut e = env();
    e.call_value = ether(1000);
    let r = exec_in(&Vm::new(), world("push 1 push 0 sstore stop"), &[], &e);
    ensure_eq!(r.trace.exception, Exception::Revert);
    ensure_eq!(r.post, r.pre);
    Ok(())
}

fn call_return_override() -> Result<(), String> {
    let mut pre = world(&call_asm(OTHER, 0));
    pre.insert(OTHER, Account::with_code(assemble("push 9 push 1 sstore stop").unwrap(), U256::ZERO));
    let mut e = env();
    e.call_return_override = Some(U256::ZERO);
    let r = exec_in(&Vm::new(), pre.clone(), &[], &e);
    ensure_eq!(slot(&r.post, ME, 0), w(0));
    ensure_eq!(slot(&r.post, OTHER, 1), w(0));
    e.call_return_override = Some(w(7));
    let r = exec_in(&Vm::new(), pre, &[], &e);
    ensure_eq!(slot(&r.post, ME, 0), w(7));
    ensure_eq!(slot(&r.post, OTHER, 1), w(9));
    Ok(())
}

fn ext_code_size() -> Result<(), String> {
    let code = format!("push {ME} extcodesize push 0 sstore push {EOA} extcodesize push 1 sstore stop");
    let r = exec_in(&Vm::new(), world(&code), &[], &env());
    let own_len = r.pre.code(&ME).unwrap().len() as u64;
    ensure_eq!(slot(&r.post, ME, 0), w(own_len));
    ensure_eq!(slot(&r.post, ME, 1), w(0));
    let mut e = env();
    e.ext_code_size_override = BTreeMap::from([(EOA, 1234)]);
    let r = exec_in(&Vm::new(), world(&code), &[], &e);
    ensure_eq!(slot(&r.post, ME, 1), w(1234));
    Ok(())
}

fn return_data_size() -> Result<(), String> {
    let code = format!(
        "push 32 push 0 push 0 push 0 push {OTHER} gas staticcall pop \
         returndatasize push 0 sstore stop"
    );
    let mut pre = world(&code);
    pre.insert(OTHER, Account::with_code(assemble("push 5 push 0 mstore push 32 push 0 return").unwrap(), U256::ZERO));
    let r = exec_in(&Vm::new(), pre.clone(), &[], &env());
    ensure_eq!(slot(&r.post, ME, 0), w(32));
    let mut e = env();
    e.return_data_size_override = Some(64);
    let r = exec_in(&Vm::new(), pre, &[], &e);
    ensure_eq!(slot(&r.post, ME, 0), w(64));
    Ok(())
}

fn return_data_copy_bounds() -> Result<(), String> {
    let code = format!(
        "push 0 push 0 push 0 push 0 push {OTHER} gas staticcall pop \
         push 32 push 0 push 0 returndatacopy stop"
    );
    let mut pre = world(&code);
    pre.insert(OTHER, Account::with_code(assemble("push 5 push 0 mstore push 32 push 0 return").unwrap(), U256::ZERO));
    let r = exec_in(&Vm::new(), pre.clone(), &[], &env());
    ensure_eq!(r.trace.exception, Exception::None);
    let bad = code.replace("push 32 push 0 push 0 returndatacopy", "push 33 push 0 push 0 returndatacopy");
    let mut pre2 = world(&bad);
    pre2.insert(OTHER, pre.account(&OTHER).unwrap().clone());
    let r = exec_in(&Vm::new(), pre2, &[], &env());
    ensure_eq!(r.trace.exception, Exception::InvalidOp);
    Ok(())
}

fn unknown_opcode_is_error() -> Result<(), String> {
    let mut pre = world("stop");
    pre.insert(ME, Account::with_code(Bytecode::new(vec![0x60, 0x01, 0x0c]), U256::ZERO));
    match Vm::new().execute_transaction(&pre, ME, &[], &env()) {
        Err(VmError::UnknownOpcode { pc: 2, opcode: 0x0c, .. }) => Ok(()),
        other => Err(format!("unexpected {other:?}")),
    }
}

fn zero_gas_limit_is_error() -> Result<(), String> {
    let mut e = env();
    e.gas_limit = 0;
    match Vm::new().execute_transaction(&world("stop"), ME, &[], &e) {
        Err(VmError::ZeroGasLimit) => Ok(()),
        other => Err(format!("unexpected {other:?}")),
    }
}

fn sequence_store_then_load() -> Result<(), String> {
    let code = "push 0 calldataload iszero push @load jumpi push 7 push 0 sstore stop \
                load: push 0 sload pop stop";
    let pre = world(code);
    let mut store = vec![0u8; 32];
    store[31] = 1;
    let txs = vec![
        TxInput { to: ME, calldata: store, env: env() },
        TxInput { to: ME, calldata: vec![0; 32], env: env() },
    ];
    let (traces, post) = Vm::new().execute_sequence(&pre, &txs).map_err(|e| e.to_string())?;
    let read = traces[1].storage_reads.first().ok_or("no read")?;
    ensure_eq!((read.address, read.slot, read.value), (ME, w(0), w(7)));
    ensure_eq!(slot(&post, ME, 0), w(7));
    let (single, single_post) = Vm::new().execute_sequence(&pre, &txs[..1]).map_err(|e| e.to_string())?;
    let (t, p) = Vm::new().execute_transaction(&pre, ME, &txs[0].calldata, &env()).unwrap();
    ensure_eq!(single, vec![t]);
    ensure_eq!(single_post, p);
    Ok(())
}

fn sequence_revert_then_store() -> Result<(), String> {
    let code = "push 0 calldataload push @ok jumpi push 0 push 0 revert ok: push 7 push 0 sstore stop";
    let pre = world(code);
    let mut store = vec![0u8; 32];
    store[31] = 1;
    let txs = vec![
        TxInput { to: ME, calldata: vec![0; 32], env: env() },
        TxInput { to: ME, calldata: store, env: env() },
    ];
    let (traces, post) = Vm::new().execute_sequence(&pre, &txs).map_err(|e| e.to_string())?;
    ensure_eq!(traces[0].exception, Exception::Revert);
    ensure_eq!(traces[1].exception, Exception::None);
    ensure_eq!(slot(&post, ME, 0), w(7));
    Ok(())
}

fn block_dependent_branch() -> Result<(), String> {
    let r = exec("timestamp push 1 and push @x jumpi stop x: stop");
    ensure_eq!(r.trace.block_branches.len(), 1);
    let r = exec("push 1 push @x jumpi stop x: stop");
    ensure_eq!(r.trace.block_branches.len(), 0);
    Ok(())
}

fn call_status_checked() -> Result<(), String> {
    let dropped = format!("push 0 push 0 push 0 push 0 push 0 push {EOA} gas call pop stop");
    let r = exec(&dropped);
    ensure!(!r.trace.external_calls[0].status_checked, "dropped status marked checked");
    let checked = format!("push 0 push 0 push 0 push 0 push 0 push {EOA} gas call iszero push @f jumpi stop f: stop");
    let r = exec(&checked);
    ensure!(r.trace.external_calls[0].status_checked, "branch on status not marked");
    Ok(())
}

fn overflow_effect_into_storage() -> Result<(), String> {
    let r = exec("push 1 push 0 sub push 0 sstore stop");
    ensure_eq!(r.trace.overflows.len(), 1);
    ensure_eq!((r.trace.overflows[0].wrap_pc, r.trace.overflows[0].sink_pc), (4, 7));
    // an 8-bit masked increment past 255
    let r = exec("push 0xff push 1 add push 0xff and push 0 sstore stop");
    ensure_eq!(r.trace.overflows.len(), 1);
    ensure_eq!(r.trace.overflows[0].wrap_pc, 4);
    let r = exec("push 2 push 1 add push 0 sstore stop");
    ensure_eq!(r.trace.overflows.len(), 0);
    Ok(())
}

fn scripted_reentry() -> Result<(), String> {
    // Pays 1 wei to EOA on every entry; EOA re-enters once.
    let code = format!(
        "push 0 sload push 1 add push 0 sstore \
         push 0 push 0 push 0 push 0 push 1 push {EOA} gas call pop stop"
    );
    let mut pre = world(&code);
    pre.set_balance(ME, w(10));
    let vm = Vm::new().with_script(
        EOA,
        AttackerScript {
            calls: vec![ScriptedCall { target: None, calldata: vec![], value: U256::ZERO, gas: None }],
            max_reentries: 1,
        },
    );
    let r = exec_in(&vm, pre, &[], &env());
    ensure_eq!(slot(&r.post, ME, 0), w(2));
    ensure_eq!(r.post.balance(&EOA), w(2));
    let outer = &r.trace.external_calls[0];
    ensure!(outer.reentered && outer.reentry_succeeded, "reentry not flagged");
    ensure!(r.trace.external_calls.iter().any(|c| c.scripted), "scripted call missing");
    Ok(())
}

fn determinism() -> Result<(), String> {
    let code = format!(
        "push 0 calldataload push 0 sstore timestamp push 1 sstore \
         push 0 push 0 push 0 push 0 push 0 push {EOA} gas call pop stop"
    );
    let a = exec_in(&Vm::new(), world(&code), &[1, 2, 3], &env());
    let b = exec_in(&Vm::new(), world(&code), &[1, 2, 3], &env());
    ensure_eq!(a.trace.fingerprint(), b.trace.fingerprint());
    ensure_eq!(a.post, b.post);
    Ok(())
}

pub fn cases() -> Vec<Case> {
    macro_rules! cases {
        ($($f:ident),* $(,)?) => { vec![$(Case { name: stringify!($f), run: $f }),*] };
    }
    cases![
        stop_only,
        sstore_42,
        revert_rolls_back,
        add_sub_order,
        mul_div_mod,
        signed_division,
        comparisons,
        bitwise,
        keccak_of_zero_word,
        calldata_ops,
        context_ops,
        gas_and_pc,
        memory_ops,
        dup_swap,
        stack_underflow,
        stack_overflow,
        bad_jumps,
        jumpi_edges,
        invalid_is_assert,
        out_of_gas,
        out_of_gas_boundary,
        sload_cost,
        memory_cap,
        logs_recorded,
        return_data,
        call_to_eoa_moves_value,
        call_without_funds_fails,
        nested_call_writes_callee,
        nested_revert_is_contained,
        delegatecall_uses_caller_storage,
        staticcall_forbids_writes,
        call_depth_limit,
        selfdestruct_removes_account,
        balance_override,
        insufficient_value_reverts,
        call_return_override,
        ext_code_size,
        return_data_size,
        return_data_copy_bounds,
        unknown_opcode_is_error,
        zero_gas_limit_is_error,
        sequence_store_then_load,
        sequence_revert_then_store,
        block_dependent_branch,
        call_status_checked,
        overflow_effect_into_storage,
        scripted_reentry,
        determinism,
    ]
}
