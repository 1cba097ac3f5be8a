//! Generate seed sequences for a bundle with the offline stub backend, score
//! them and keep the top ones.
//!
//! ```text
//! cargo run --example seed_generation [-- <bundle-dir>]
//! ```

use std::path::PathBuf;

use seqfuzz::corpus::{prefuzz_score, select_top_k, Bundle, TopKConfig, DEFAULT_LAMBDA};
use seqfuzz::llmgen::{render_sequences, GenerationRequest, SeedGenerator};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/token"));
    let bundle = Bundle::load(&dir).unwrap();
    let generator = SeedGenerator::from_env(7);
    let req = GenerationRequest {
        count: 20,
        max_len: 6,
        hint: None,
        round: 0,
    };
    let (prompts, seeds) = generator.generate(&bundle, &req).unwrap();
    println!("backend: {}", if generator.uses_stub() { "stub" } else { "remote" });
    for f in &prompts.abstraction {
        println!("  {}", f.summary);
    }
    println!("first sequences as proposed:\n{}", render_sequences(&prompts.sequences[..prompts.sequences.len().min(3)]));

    let scored: Vec<_> = seeds
        .into_iter()
        .map(|s| {
            let score = prefuzz_score(&s, &bundle, DEFAULT_LAMBDA).unwrap();
            (s, score)
        })
        .collect();
    let top = select_top_k(&scored, &TopKConfig { rho: 0.25, k_max: 32 });
    println!("{} valid seeds, keeping {}", scored.len(), top.len());
    for s in &top {
        let (_, score) = scored.iter().find(|(x, _)| x.id == s.id).unwrap();
        let calls: Vec<&str> = s.txs.iter().map(|t| t.function.name.as_str()).collect();
        println!("  {} score {:>6.1}  {}", s.id, score.score, calls.join(" -> "));
    }
}
