//! A short full campaign on one bundle, with outputs and the text report.
//!
//! ```text
//! cargo run --release --example campaign [-- <bundle-dir> [<out-dir>]]
//! ```

use std::path::PathBuf;

use seqfuzz::campaign::{render_report, run_campaign, write_outputs, BackendChoice, CampaignConfig};
use seqfuzz::corpus::Bundle;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/magic_lock"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("seqfuzz-campaign"));
    let bundle = Bundle::load(&dir).unwrap();
    let cfg = CampaignConfig {
        backend: BackendChoice::Stub,
        budget_secs: Some(5.0),
        rng_seed: 1,
        ..CampaignConfig::default()
    };
    let result = run_campaign(&bundle, &cfg).unwrap();
    write_outputs(&result, &out).unwrap();
    print!("{}", render_report(&out).unwrap());
}
