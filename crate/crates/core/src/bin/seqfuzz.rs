use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqfuzz::abi::AbiValue;
use seqfuzz::campaign::{read_summary, render_report, run_campaign, seed_corpus, write_outputs, CampaignConfig};
use seqfuzz::corpus::{load_seed, persist, Bundle};
use seqfuzz::oracles::detect_all;

#[derive(Parser)]
#[command(name = "seqfuzz", version, about = "Transaction-sequence fuzzer for EVM contract bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign against a bundle directory.
    Fuzz(FuzzArgs),
    /// Re-execute one seed and print its trace summary and findings.
    Replay { seed: PathBuf, bundle: PathBuf },
    /// Seed corpus operations.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Render the summary of a campaign output directory.
    Report { out: PathBuf },
}

#[derive(Args)]
struct FuzzArgs {
    bundle: PathBuf,
    /// TOML campaign configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget_secs: Option<f64>,
    #[arg(long)]
    max_generations: Option<u64>,
    #[arg(long)]
    no_lsg: bool,
    #[arg(long)]
    no_mos: bool,
    #[arg(long)]
    no_hfe: bool,
    /// Output directory [default: out/<bundle name>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Run only the seeding stage and print the ranked seeds.
    Gen {
        bundle: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the selected seeds here as JSON files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Anything that ends the run with exit code 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<CampaignConfig, Failure> {
    match path {
        Some(p) => Ok(CampaignConfig::load(p)?),
        None => Ok(CampaignConfig::default()),
    }
}

fn fuzz(a: FuzzArgs) -> Result<bool, Failure> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    if let Some(b) = a.budget_secs {
        cfg.budget_secs = Some(b);
    }
    if a.max_generations.is_some() {
        cfg.max_generations = a.max_generations;
    }
    cfg.no_lsg |= a.no_lsg;
    cfg.no_mos |= a.no_mos;
    cfg.no_hfe |= a.no_hfe;
    cfg.validate()?;
    let bundle = Bundle::load(&a.bundle)?;
    let out = a.out.unwrap_or_else(|| Path::new("out").join(&bundle.name));
    let r = run_campaign(&bundle, &cfg)?;
    write_outputs(&r, &out)?;
    let (instructions, branches, raw) = r.coverage.totals();
    println!(
        "{}: {} generations, {} execs, {instructions} instructions, {branches} branch edges, {raw} RAW pairs",
        r.bundle,
        r.generations.len(),
        r.execs
    );
    for b in &r.bugs {
        println!("  {} {}:{} {}", b.class, b.address, b.pc, b.description);
    }
    println!("outputs in {}", out.display());
    Ok(!r.bugs.is_empty())
}

fn replay(seed: &Path, bundle: &Path) -> Result<bool, Failure> {
    let bundle = Bundle::load(bundle)?;
    let seed = load_seed(seed)?;
    let exec = bundle.execute_seed(&seed)?;
    println!("seed {} ({:?}, {} txs)", seed.id, seed.origin, seed.txs.len());
    for (i, (tx, t)) in seed.txs.iter().zip(&exec.traces).enumerate() {
        let args: Vec<String> = tx.args.iter().map(AbiValue::literal).collect();
        println!(
            "  tx{i} {}({}) from #{} value {}: {:?}, {} instrs, {} branches, {} sstore, {} sload, {} calls, gas {}, trace {:016x}",
            tx.function.name,
            args.join(", "),
            tx.sender,
            tx.value,
            t.exception,
            t.instr_sites.len(),
            t.branch_edges.len(),
            t.storage_writes.len(),
            t.storage_reads.len(),
            t.external_calls.len(),
            t.gas_used,
            t.fingerprint()
        );
    }
    let bugs = detect_all(&seed, &exec, &bundle);
    if bugs.is_empty() {
        println!("no findings");
    }
    for b in &bugs {
        println!("  {} {}:{} tx {} {}", b.class, b.address, b.pc, b.tx_index, b.description);
    }
    Ok(!bugs.is_empty())
}

fn corpus_gen(bundle: &Path, count: usize, config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<bool, Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let bundle = Bundle::load(bundle)?;
    let scored = seed_corpus(&bundle, &cfg, count)?;
    for (s, p) in &scored {
        println!("{} {:>8.2} {:>3} txs  {:?}", s.id, p.score, s.txs.len(), s.origin);
    }
    if let Some(dir) = out {
        let seeds: Vec<_> = scored.into_iter().map(|(s, _)| s).collect();
        persist(&seeds, dir)?;
        println!("{} seeds written to {}", seeds.len(), dir.display());
    }
    Ok(false)
}

fn report(out: &Path) -> Result<bool, Failure> {
    let bugs = read_summary(out)?.bugs;
    print!("{}", render_report(out)?);
    Ok(bugs > 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Fuzz(a) => fuzz(a),
        Command::Replay { seed, bundle } => replay(&seed, &bundle),
        Command::Corpus(CorpusCommand::Gen {
            bundle,
            count,
            config,
            seed,
            out,
        }) => corpus_gen(&bundle, count, config.as_deref(), seed, out.as_deref()),
        Command::Report { out } => report(&out),
    };
    match res {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(Failure(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
