//! Run one transaction through the instrumented interpreter and print what
//! the trace recorded.
//!
//! ```text
//! cargo run --example vm_trace
//! ```

use seqfuzz::primitives::{ether, Address, U256};
use seqfuzz::vm::asm::assemble;
use seqfuzz::vm::{opcode, Account, Environment, Vm, WorldState};

fn main() {
    let me = Address::repeat_byte(0xcc);
    let caller = Address::repeat_byte(0x11);
    // Store calldata word 0 in slot 1 when it is above 10, then read it back.
    let code = assemble(
        "push 0 calldataload dup1 push 10 lt push @big jumpi pop stop \
         big: push 1 sstore push 1 sload pop stop",
    )
    .unwrap();
    let mut pre = WorldState::new();
    pre.insert(me, Account::with_code(code, U256::ZERO));
    pre.insert(caller, Account::with_balance(ether(1)));

    let vm = Vm::new();
    for arg in [3u64, 42] {
        let calldata = U256::from(arg).to_be_bytes::<32>();
        let (trace, post) = vm
            .execute_transaction(&pre, me, &calldata, &Environment::with_caller(caller))
            .unwrap();
        println!("calldata {arg}: {:?}, gas used {}", trace.exception, trace.gas_used);
        let ops: Vec<String> = trace.instr_sites.iter().map(|s| format!("{}:{}", s.pc, opcode::name(s.opcode))).collect();
        println!("  executed  {}", ops.join(" "));
        for e in &trace.branch_edges {
            println!("  branch    pc {} taken {}", e.pc, e.taken);
        }
        for w in &trace.storage_writes {
            println!("  sstore    slot {} = {}", w.slot, w.value);
        }
        for r in &trace.storage_reads {
            println!("  sload     slot {} -> {}", r.slot, r.value);
        }
        println!("  slot 1 after: {}", post.sload(&me, U256::from(1)));
    }
}
