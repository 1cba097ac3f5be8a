//! Assemble the contract corpus into `corpus/<name>/`.
//!
//! ```text
//! cargo run --example build_corpus [-- <out-dir>]
//! ```
//!
//! Every bundle also gets its source as `code.asm`.

use std::path::PathBuf;

use seqfuzz::corpus::{AttackerSpec, Bundle, Genesis, Roles, ScriptedCallSpec, DEFAULT_ATTACKER, DEFAULT_OWNER};
use seqfuzz::oracles::BugClass;
use seqfuzz::primitives::{ether, keccak256};
use seqfuzz::vm::asm::assemble;
use seqfuzz::U256;

/// Selector dispatch, then the shared failure exit.
fn dispatch(fns: &[(&str, &str)]) -> String {
    let mut s = String::from("push 0 calldataload push 0xe0 shr\n");
    for (sig, label) in fns {
        s += &format!("dup1 push ${sig} eq push @{label} jumpi\n");
    }
    s + "fail: push 0 dup1 revert\n"
}

const NONPAYABLE: &str = "callvalue push @fail jumpi\n";

/// `[b, a] -> [a + b]`, reverting on wrap.
const CHECKED_ADD: &str = "dup2 add dup1 swap2 gt push @fail jumpi\n";

/// `[value, to] -> []`, reverting when the call fails.
const PAY: &str = "push 0 push 0 push 0 push 0 dup5 dup7 gas call iszero push @fail jumpi pop pop\n";

struct Spec {
    name: &'static str,
    source: String,
    abi: Vec<(&'static str, &'static str)>,
    genesis: Genesis,
    bugs: Vec<BugClass>,
    attacker: Option<AttackerSpec>,
}

fn abi_json(fns: &[(&str, &str)]) -> String {
    let entries: Vec<serde_json::Value> = fns
        .iter()
        .map(|(sig, mutability)| {
            let (name, rest) = sig.split_once('(').unwrap();
            let inputs: Vec<serde_json::Value> = rest
                .trim_end_matches(')')
                .split(',')
                .filter(|t| !t.is_empty())
                .enumerate()
                .map(|(i, t)| serde_json::json!({"name": format!("a{i}"), "type": t}))
                .collect();
            serde_json::json!({"type": "function", "name": name, "inputs": inputs, "stateMutability": mutability})
        })
        .collect();
    serde_json::to_string_pretty(&entries).unwrap() + "\n"
}

fn pot(n: u64) -> Genesis {
    Genesis {
        balance: ether(n),
        ..Default::default()
    }
}

fn owner_slot0() -> Genesis {
    let mut g = Genesis::default();
    g.storage.insert("0x0".into(), DEFAULT_OWNER.to_string());
    g
}

fn specs() -> Vec<Spec> {
    let lock_key = U256::from_be_bytes(keccak256(b"seqfuzz.lock"));
    let mut token_genesis = Genesis::default();
    token_genesis.storage.insert(DEFAULT_OWNER.to_string(), "1000000000000000000000000".into());

    vec![
        Spec {
            name: "assert_fail",
            source: dispatch(&[("set(uint256)", "set"), ("check()", "check")])
                + "set: " + NONPAYABLE + "push 4 calldataload push 0 sstore stop\n"
                + "check: " + NONPAYABLE + "push 0 sload push 1000 lt push @bad jumpi stop\n"
                + "bad: invalid\n",
            abi: vec![("set(uint256)", "nonpayable"), ("check()", "nonpayable")],
            genesis: Genesis::default(),
            bugs: vec![BugClass::AF],
            attacker: None,
        },
        Spec {
            name: "block_lottery",
            // Pays twice the stake on even timestamps.
            source: dispatch(&[("play()", "play")])
                + "play: callvalue iszero push @fail jumpi\n"
                + "callvalue push 1000000000000000000 lt push @fail jumpi\n"
                + "push 2 timestamp mod push @done jumpi\n"
                + "caller callvalue push 2 mul " + PAY
                + "done: stop\n",
            abi: vec![("play()", "payable")],
            genesis: pot(1000),
            bugs: vec![BugClass::BD],
            attacker: None,
        },
        Spec {
            name: "overflow_counter",
            source: dispatch(&[("add(uint8)", "add"), ("get()", "get")])
                + "add: " + NONPAYABLE + "push 4 calldataload push 0 sload add push 0xff and push 0 sstore stop\n"
                + "get: " + NONPAYABLE + "push 0 sload push 0 mstore push 32 push 0 return\n",
            abi: vec![("add(uint8)", "nonpayable"), ("get()", "view")],
            genesis: Genesis::default(),
            bugs: vec![BugClass::IO],
            attacker: None,
        },
        Spec {
            name: "open_faucet",
            source: dispatch(&[("claim()", "claim")])
                + "claim: " + NONPAYABLE + "caller push 1 " + PAY + "stop\n",
            abi: vec![("claim()", "nonpayable")],
            genesis: pot(1000),
            bugs: vec![BugClass::LE],
            attacker: None,
        },
        Spec {
            name: "frozen_deposit",
            source: dispatch(&[("deposit()", "deposit"), ("count()", "count")])
                + "deposit: push 0 sload push 1 add push 0 sstore stop\n"
                + "count: " + NONPAYABLE + "push 0 sload push 0 mstore push 32 push 0 return\n",
            abi: vec![("deposit()", "payable"), ("count()", "view")],
            genesis: Genesis::default(),
            bugs: vec![BugClass::FE],
            attacker: None,
        },
        Spec {
            name: "reentrancy_bank",
            // Balance keyed by caller; cleared only after the payout.
            source: dispatch(&[("deposit()", "deposit"), ("withdraw()", "withdraw")])
                + "deposit: caller sload callvalue " + CHECKED_ADD + "caller sstore stop\n"
                + "withdraw: " + NONPAYABLE + "caller sload dup1 iszero push @done jumpi\n"
                + "caller swap1 " + PAY
                + "push 0 caller sstore\n"
                + "done: stop\n",
            abi: vec![("deposit()", "payable"), ("withdraw()", "nonpayable")],
            genesis: pot(1000),
            bugs: vec![BugClass::RE],
            attacker: Some(AttackerSpec {
                address: DEFAULT_ATTACKER,
                max_reentries: 1,
                calls: vec![ScriptedCallSpec {
                    target: None,
                    function: "withdraw()".into(),
                    args: vec![],
                    value: U256::ZERO,
                }],
            }),
        },
        Spec {
            name: "first_claim",
            // The first paying caller takes the whole pot.
            source: dispatch(&[("play()", "play")])
                + "play: callvalue iszero push @fail jumpi\n"
                + "push 0 sload push @fail jumpi\n"
                + "push 1 push 0 sstore\n"
                + "caller address balance " + PAY + "stop\n",
            abi: vec![("play()", "payable")],
            genesis: pot(10),
            bugs: vec![BugClass::TD],
            attacker: None,
        },
        Spec {
            name: "unchecked_send",
            source: dispatch(&[("deposit()", "deposit"), ("withdraw()", "withdraw")])
                + "deposit: caller sload callvalue " + CHECKED_ADD + "caller sstore stop\n"
                + "withdraw: " + NONPAYABLE + "caller sload push 0 caller sstore\n"
                + "push 0 push 0 push 0 push 0 swap4 caller gas call pop stop\n",
            abi: vec![("deposit()", "payable"), ("withdraw()", "nonpayable")],
            genesis: Genesis::default(),
            bugs: vec![BugClass::UE],
            attacker: None,
        },
        Spec {
            name: "open_selfdestruct",
            source: dispatch(&[("kill()", "kill"), ("ping()", "ping")])
                + "kill: " + NONPAYABLE + &format!("push {} selfdestruct\n", DEFAULT_OWNER)
                + "ping: " + NONPAYABLE + "push 1 push 0 sstore stop\n",
            abi: vec![("kill()", "nonpayable"), ("ping()", "nonpayable")],
            genesis: pot(1),
            bugs: vec![BugClass::US],
            attacker: None,
        },
        Spec {
            name: "open_forwarder",
            source: dispatch(&[("forward(address)", "forward")])
                + "forward: " + NONPAYABLE
                + "push 0 push 0 push 0 push 0 push 4 calldataload gas delegatecall iszero push @fail jumpi stop\n",
            abi: vec![("forward(address)", "nonpayable")],
            genesis: Genesis::default(),
            bugs: vec![BugClass::UD],
            attacker: None,
        },
        Spec {
            name: "magic_lock",
            source: dispatch(&[("unlock(uint256)", "unlock"), ("locked()", "locked")])
                + "unlock: " + NONPAYABLE + &format!("push 4 calldataload push {lock_key:#x} eq push @open jumpi stop\n")
                + "open: push 1 push 0 sstore stop\n"
                + "locked: " + NONPAYABLE + "push 0 sload iszero push 0 mstore push 32 push 0 return\n",
            abi: vec![("unlock(uint256)", "nonpayable"), ("locked()", "view")],
            genesis: Genesis::default(),
            bugs: vec![],
            attacker: None,
        },
        Spec {
            name: "token",
            source: dispatch(&[("transfer(address,uint256)", "transfer"), ("balanceOf(address)", "balance_of")])
                + "transfer: " + NONPAYABLE
                + "caller sload dup1 push 36 calldataload gt push @fail jumpi\n"
                + "push 36 calldataload swap1 sub caller sstore\n"
                + "push 4 calldataload sload push 36 calldataload " + CHECKED_ADD
                + "push 4 calldataload sstore stop\n"
                + "balance_of: " + NONPAYABLE + "push 4 calldataload sload push 0 mstore push 32 push 0 return\n",
            abi: vec![("transfer(address,uint256)", "nonpayable"), ("balanceOf(address)", "view")],
            genesis: token_genesis,
            bugs: vec![],
            attacker: None,
        },
        Spec {
            name: "safe_bank",
            source: dispatch(&[("deposit()", "deposit"), ("withdraw()", "withdraw")])
                + "deposit: caller sload callvalue " + CHECKED_ADD + "caller sstore stop\n"
                + "withdraw: " + NONPAYABLE + "caller sload dup1 iszero push @done jumpi\n"
                + "push 0 caller sstore caller swap1 " + PAY
                + "done: stop\n",
            abi: vec![("deposit()", "payable"), ("withdraw()", "nonpayable")],
            genesis: Genesis::default(),
            bugs: vec![],
            attacker: None,
        },
        Spec {
            name: "owned_vault",
            source: dispatch(&[("deposit()", "deposit"), ("withdraw(uint256)", "withdraw")])
                + "deposit: stop\n"
                + "withdraw: " + NONPAYABLE + "push 0 sload caller eq iszero push @fail jumpi\n"
                + "caller push 4 calldataload " + PAY + "stop\n",
            abi: vec![("deposit()", "payable"), ("withdraw(uint256)", "nonpayable")],
            genesis: owner_slot0(),
            bugs: vec![],
            attacker: None,
        },
        Spec {
            name: "counter",
            source: dispatch(&[("increment()", "increment"), ("get()", "get")])
                + "increment: " + NONPAYABLE + "push 0 sload push 1 " + CHECKED_ADD + "push 0 sstore stop\n"
                + "get: " + NONPAYABLE + "push 0 sload push 0 mstore push 32 push 0 return\n",
            abi: vec![("increment()", "nonpayable"), ("get()", "view")],
            genesis: Genesis::default(),
            bugs: vec![],
            attacker: None,
        },
        Spec {
            name: "owned_proxy",
            source: dispatch(&[("setImpl(address)", "set_impl"), ("execute()", "execute")])
                + "set_impl: " + NONPAYABLE + "push 0 sload caller eq iszero push @fail jumpi\n"
                + "push 4 calldataload push 1 sstore stop\n"
                + "execute: " + NONPAYABLE
                + "push 0 push 0 push 0 push 0 push 1 sload gas delegatecall iszero push @fail jumpi stop\n",
            abi: vec![("setImpl(address)", "nonpayable"), ("execute()", "nonpayable")],
            genesis: owner_slot0(),
            bugs: vec![],
            attacker: None,
        },
        Spec {
            name: "time_flag",
            source: dispatch(&[("poke()", "poke"), ("flag()", "flag")])
                + "poke: " + NONPAYABLE + "push 1700086400 timestamp gt push @late jumpi\n"
                + "push 1 push 1 sstore stop\n"
                + "late: push 2 push 1 sstore stop\n"
                + "flag: " + NONPAYABLE + "push 1 sload push 0 mstore push 32 push 0 return\n",
            abi: vec![("poke()", "nonpayable"), ("flag()", "view")],
            genesis: Genesis::default(),
            bugs: vec![],
            attacker: None,
        },
    ]
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus"));
    for spec in specs() {
        let code = assemble(&spec.source).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        let bundle = Bundle::new(
            spec.name,
            code,
            &abi_json(&spec.abi),
            Roles::default(),
            spec.attacker,
            spec.genesis,
            Some(spec.bugs),
        )
        .unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        let dir = out.join(spec.name);
        bundle.save(&dir).expect("write bundle");
        std::fs::write(dir.join("code.asm"), &spec.source).expect("write source");
        println!("{:<18} {:>4} bytes  {}", spec.name, bundle.code.len(), dir.display());
    }
}
