//! Record the path constraint of a seed on the magic-constant bundle, flip
//! the guard and replay the synthesized seed.
//!
//! ```text
//! cargo run --example symbolic_flip
//! ```

use std::path::PathBuf;

use seqfuzz::abi::AbiValue;
use seqfuzz::corpus::{Bundle, Origin, Seed, Transaction};
use seqfuzz::symexec::{collect_constraints, flip_and_solve, synthesize_seed, SolveStatus};
use seqfuzz::U256;

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/magic_lock");
    let bundle = Bundle::load(&dir).unwrap();
    let unlock = bundle.function("unlock(uint256)").unwrap().clone();
    let seed = Seed::new(
        vec![Transaction::new(unlock, vec![AbiValue::Uint(U256::from(1))], 1, U256::ZERO)],
        Origin::Stub,
    );
    let pc = collect_constraints(&bundle, &seed).unwrap();
    for (i, b) in pc.branches.iter().enumerate() {
        println!("branch {i} pc {:>3} taken {:<5} {}", b.pc, b.taken, pc.arena.render(b.predicate));
    }
    let last = pc.branches.len() - 1;
    let r = flip_and_solve(&pc, last, 2000);
    println!("flip branch {last}: {:?}", r.status);
    if r.status == SolveStatus::Sat {
        for (src, v) in &r.assignment {
            println!("  {src:?} = {v:#x}");
        }
        let flipped = synthesize_seed(&bundle, &seed, &r.assignment, &pc.flipped_edge(last)).unwrap();
        let exec = bundle.execute_seed(&flipped).unwrap();
        let stored = exec.post.sload(&bundle.contract(), U256::ZERO);
        println!("replayed seed {}: slot 0 = {stored}", flipped.id);
    }
}
