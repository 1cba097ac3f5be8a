//! Watch the mutation scheduler shift probability towards the operator
//! whose children find the most coverage.
//!
//! ```text
//! cargo run --example operator_scheduler
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqfuzz::mutate::{MutationOperator, OperatorScheduler};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = OperatorScheduler::new(0.05, 0.9);
    let good = MutationOperator::Timestamp;
    for generation in 0..=40 {
        for _ in 0..40 {
            let ops = s.sample(&mut rng);
            let gain: u64 = ops
                .iter()
                .map(|&op| if op == good { rng.random_range(0..=20) } else { rng.random_range(0..=2) })
                .sum();
            s.credit(&ops, gain, 0);
        }
        s.update(&mut rng);
        if generation % 10 == 0 {
            let row: Vec<String> = MutationOperator::ALL.iter().map(|&op| format!("{:.3}", s.probability(op))).collect();
            println!("gen {generation:>2}  {}", row.join(" "));
        }
    }
    let names: Vec<&str> = MutationOperator::ALL.iter().map(|op| op.name()).collect();
    println!("operators: {}", names.join(" "));
}
