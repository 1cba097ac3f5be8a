use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{persist, CorpusError, Seed};
use crate::feedback::Trigger;
use crate::oracles::BugReport;

use super::{CampaignConfig, CampaignResult};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggerCounts {
    pub symbolic: usize,
    pub reinit: usize,
}

/// Contents of `campaign.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub bundle: String,
    pub generations: u64,
    pub execs: u64,
    pub faults: u64,
    pub instructions: usize,
    pub branches: usize,
    pub raw_pairs: usize,
    pub bugs: usize,
    pub bug_classes: Vec<String>,
    pub triggers: TriggerCounts,
    /// Generation index of each trigger, in order.
    pub trigger_generations: Vec<(u64, Trigger)>,
    pub symbolic_seeds: usize,
    pub used_stub: bool,
    pub wall_secs: f64,
    pub config: CampaignConfig,
}

impl CampaignSummary {
    pub fn of(r: &CampaignResult) -> Self {
        let (instructions, branches, raw_pairs) = r.coverage.totals();
        Self {
            bundle: r.bundle.clone(),
            generations: r.generations.len() as u64,
            execs: r.execs,
            faults: r.faults,
            instructions,
            branches,
            raw_pairs,
            bugs: r.bugs.len(),
            bug_classes: r.bug_classes().iter().map(ToString::to_string).collect(),
            triggers: TriggerCounts {
                symbolic: r.triggers_of(Trigger::Symbolic).count(),
                reinit: r.triggers_of(Trigger::Reinit).count(),
            },
            trigger_generations: r.triggers.iter().map(|t| (t.generation, t.trigger)).collect(),
            symbolic_seeds: r.triggers.iter().map(|t| t.symbolic_seeds).sum(),
            used_stub: r.used_stub,
            wall_secs: r.wall.as_secs_f64(),
            config: r.config.clone(),
        }
    }
}

fn trigger_word(t: Trigger) -> &'static str {
    match t {
        Trigger::None => "none",
        Trigger::Symbolic => "symbolic",
        Trigger::Reinit => "reinit",
    }
}

pub fn coverage_csv(r: &CampaignResult) -> String {
    let mut s = String::from("generation,execs,instructions,branches,raw_pairs,best_fit,mean_fit,bugs,trigger\n");
    for g in &r.generations {
        writeln!(
            s,
            "{},{},{},{},{},{},{:.3},{},{}",
            g.generation,
            g.execs,
            g.instructions,
            g.branches,
            g.raw_pairs,
            g.best_fit,
            g.mean_fit,
            g.bugs,
            trigger_word(g.trigger)
        )
        .unwrap();
    }
    s
}

pub fn operators_csv(r: &CampaignResult) -> String {
    let mut s = String::from("generation,operator,fit,p\n");
    for g in &r.generations {
        for o in &g.operators {
            writeln!(s, "{},{},{:.6},{:.6}", g.generation, o.operator, o.fit, o.p).unwrap();
        }
    }
    s
}

pub fn bugs_jsonl(r: &CampaignResult) -> String {
    r.bugs
        .iter()
        .map(|b| serde_json::to_string(b).expect("report serializes") + "\n")
        .collect()
}

/// Write `coverage.csv`, `operators.csv`, `bugs.jsonl`, `campaign.json` and
/// `corpus/` (final population plus bug witnesses) under `dir`.
pub fn write_outputs(r: &CampaignResult, dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io(&path))
    };
    write("coverage.csv", coverage_csv(r))?;
    write("operators.csv", operators_csv(r))?;
    write("bugs.jsonl", bugs_jsonl(r))?;
    write(
        "campaign.json",
        serde_json::to_string_pretty(&CampaignSummary::of(r)).expect("summary serializes") + "\n",
    )?;
    let mut seen = HashSet::new();
    let pool: Vec<Seed> = r
        .population
        .iter()
        .chain(&r.witnesses)
        .filter(|s| seen.insert(s.id))
        .cloned()
        .collect();
    persist(&pool, &dir.join("corpus"))?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<CampaignSummary, OutputError> {
    let path = dir.join("campaign.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| OutputError::Parse {
        path,
        msg: e.to_string(),
    })
}

fn read_bugs(dir: &Path) -> Result<Vec<BugReport>, OutputError> {
    let path = dir.join("bugs.jsonl");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| OutputError::Parse {
                path: path.clone(),
                msg: e.to_string(),
            })
        })
        .collect()
}

fn read_csv(dir: &Path, name: &str) -> Result<Vec<Vec<String>>, OutputError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Text report of an output directory: summary, bugs by class, final
/// operator probabilities and branch coverage per generation.
pub fn render_report(dir: &Path) -> Result<String, OutputError> {
    let sum = read_summary(dir)?;
    let bugs = read_bugs(dir)?;
    let coverage = read_csv(dir, "coverage.csv")?;
    let operators = read_csv(dir, "operators.csv")?;
    let mut s = String::new();
    writeln!(s, "campaign  {}", sum.bundle).unwrap();
    writeln!(s, "  generations   {}", sum.generations).unwrap();
    writeln!(s, "  executions    {} ({} faults)", sum.execs, sum.faults).unwrap();
    writeln!(s, "  instructions  {}", sum.instructions).unwrap();
    writeln!(s, "  branch edges  {}", sum.branches).unwrap();
    writeln!(s, "  RAW pairs     {}", sum.raw_pairs).unwrap();
    writeln!(
        s,
        "  triggers      {} symbolic, {} reinit ({} symbolic seeds)",
        sum.triggers.symbolic, sum.triggers.reinit, sum.symbolic_seeds
    )
    .unwrap();
    writeln!(s, "  backend       {}", if sum.used_stub { "stub" } else { "remote" }).unwrap();
    writeln!(s, "  wall time     {:.1} s", sum.wall_secs).unwrap();

    writeln!(s, "\nbugs ({})", bugs.len()).unwrap();
    let mut by_class: BTreeMap<String, Vec<&BugReport>> = BTreeMap::new();
    for b in &bugs {
        by_class.entry(b.class.to_string()).or_default().push(b);
    }
    for (class, list) in &by_class {
        for b in list {
            writeln!(s, "  {class:<3} {}:{:<5} tx {} seed {}  {}", b.address, b.pc, b.tx_index, b.seed, b.description)
                .unwrap();
        }
    }

    if let Some(last) = operators.last().map(|r| r[0].clone()) {
        writeln!(s, "\noperators (generation {last})").unwrap();
        writeln!(s, "  {:<18} {:>10} {:>8}", "operator", "fit", "p").unwrap();
        for r in operators.iter().filter(|r| r[0] == last) {
            writeln!(s, "  {:<18} {:>10} {:>8}", r[1], r[2], r[3]).unwrap();
        }
    }

    // Only generations where coverage or the bug count moved, plus the last.
    writeln!(s, "\ncoverage over time").unwrap();
    writeln!(s, "  {:>10} {:>10} {:>8} {:>12} {:>8}", "generation", "execs", "branches", "instructions", "bugs").unwrap();
    let mut prev: Option<&[String]> = None;
    for (i, r) in coverage.iter().enumerate() {
        let moved = prev.is_none_or(|p| p[2] != r[2] || p[3] != r[3] || p[7] != r[7]);
        if moved || i + 1 == coverage.len() {
            writeln!(s, "  {:>10} {:>10} {:>8} {:>12} {:>8}", r[0], r[1], r[3], r[2], r[7]).unwrap();
        }
        prev = Some(r);
    }
    Ok(s)
}
