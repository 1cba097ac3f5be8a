//! Run hand-written sequences against corpus bundles and print what the
//! oracles report.
//!
//! ```text
//! cargo run --example bug_oracles
//! ```

use std::path::PathBuf;

use seqfuzz::corpus::{Bundle, Origin, Seed, Transaction};
use seqfuzz::oracles::detect_all;
use seqfuzz::primitives::ether;
use seqfuzz::U256;

const USER: usize = 1;
const ATTACKER: usize = 2;

fn tx(b: &Bundle, sig: &str, sender: usize, value: U256) -> Transaction {
    Transaction::new(b.function(sig).unwrap().clone(), vec![], sender, value)
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let cases = [
        ("reentrancy_bank", vec![("deposit()", USER, ether(5)), ("deposit()", ATTACKER, ether(1)), ("withdraw()", ATTACKER, U256::ZERO)]),
        ("safe_bank", vec![("deposit()", USER, ether(5)), ("deposit()", ATTACKER, ether(1)), ("withdraw()", ATTACKER, U256::ZERO)]),
        ("open_selfdestruct", vec![("kill()", ATTACKER, U256::ZERO)]),
        ("first_claim", vec![("play()", USER, ether(1)), ("play()", ATTACKER, ether(1))]),
    ];
    for (name, calls) in cases {
        let b = Bundle::load(&root.join(name)).unwrap();
        let seed = Seed::new(calls.iter().map(|(sig, from, v)| tx(&b, sig, *from, *v)).collect(), Origin::Stub);
        let exec = b.execute_seed(&seed).unwrap();
        let reports = detect_all(&seed, &exec, &b);
        println!("{name}: {} report(s)", reports.len());
        for r in reports {
            println!("  {} tx {} pc {}: {}", r.class, r.tx_index, r.pc, r.description);
        }
    }
}
