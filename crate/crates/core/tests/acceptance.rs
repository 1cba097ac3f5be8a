//! Acceptance criteria. Each test prints one verdict line to stderr
//! (bypassing the harness capture) and fails when its criterion does.

#[path = "support/vm_cases.rs"]
mod vm_cases;

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqfuzz::campaign::{run_campaign, write_outputs, BackendChoice, CampaignConfig, CampaignResult};
use seqfuzz::corpus::{random_seed, select_top_k, Bundle, Origin, PreFuzzScore, Seed, TopKConfig};
use seqfuzz::feedback::{GlobalCoverage, RawPair, SeedCoverage, StagnationDetector, Trigger};
use seqfuzz::mutate::{MutationOperator, OperatorScheduler, P_MAX, P_MIN};
use seqfuzz::oracles::BugClass;
use seqfuzz::vm::asm::assemble;
use seqfuzz::vm::{opcode, BranchEdge};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u8, name: &str, ok: bool, started: Instant, limit: Duration, detail: &str) {
    let took = started.elapsed();
    let ok = ok && took < limit;
    let line = format!(
        "criterion {n} {name}: {} ({:.1} s of {} s) {detail}",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(ok, "{line}");
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Vec<Bundle> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("code.bin").exists())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| Bundle::load(d).unwrap()).collect()
}

fn stub(rng_seed: u64) -> CampaignConfig {
    CampaignConfig {
        backend: BackendChoice::Stub,
        rng_seed,
        ..CampaignConfig::default()
    }
}

// ---------------------------------------------------------------- 1

/// `ceil(r * n / 100)` in integers.
fn ceil_percent(r: usize, n: usize) -> usize {
    (r * n).div_ceil(100)
}

/// Repeated selection of the best remaining entry.
fn top_k_oracle(scored: &[(Seed, PreFuzzScore)], k: usize) -> Vec<Seed> {
    let mut left: Vec<&(Seed, PreFuzzScore)> = scored.iter().collect();
    let mut out = vec![];
    while out.len() < k && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (a, b) = (left[i], left[best]);
            if a.1.score > b.1.score || (a.1.score == b.1.score && a.0.id < b.0.id) {
                best = i;
            }
        }
        out.push(left.remove(best).0.clone());
    }
    out
}

fn toy() -> Bundle {
    // set(k, v): slot k % 4 = v; get(k): read slot k % 4; bump(): slot 0 += slot 1.
    let src = "push 0 calldataload push 0xe0 shr \
        dup1 push $set(uint256,uint256) eq push @set jumpi \
        dup1 push $get(uint256) eq push @get jumpi \
        dup1 push $bump() eq push @bump jumpi \
        push 0 dup1 revert \
        set: push 36 calldataload push 4 calldataload push 3 and sstore stop \
        get: push 4 calldataload push 3 and sload push 7 gt push @bad jumpi stop \
        bad: push 0 dup1 revert \
        bump: push 1 sload push 0 sload add push 0 sstore stop";
    let abi = r#"[
        {"type":"function","name":"set","inputs":[{"name":"k","type":"uint256"},{"name":"v","type":"uint256"}],"stateMutability":"nonpayable"},
        {"type":"function","name":"get","inputs":[{"name":"k","type":"uint256"}],"stateMutability":"nonpayable"},
        {"type":"function","name":"bump","inputs":[],"stateMutability":"nonpayable"}]"#;
    Bundle::simple("toy", assemble(src).unwrap(), abi).unwrap()
}

#[test]
fn criterion_1_formulas() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad: Vec<String> = vec![];

    // Pre-fuzz score
    for _ in 0..1000 {
        let (cov, exc, lambda) = (rng.random_range(0..10_000u64), rng.random_bool(0.5), rng.random_range(0.0..4.0));
        let s = PreFuzzScore::new(cov, exc, lambda);
        if s.score != cov as f64 + lambda * if exc { 1.0 } else { 0.0 } {
            bad.push(format!("score({cov},{exc},{lambda}) = {}", s.score));
        }
    }

    // Top-K against a selection oracle, 1000 instances
    let b = toy();
    let mut topk_ok = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..120);
        let mut seen = HashSet::new();
        let mut scored: Vec<(Seed, PreFuzzScore)> = vec![];
        for _ in 0..n {
            let s = random_seed(&b, 6, Origin::Stub, &mut rng);
            let score = PreFuzzScore::new(rng.random_range(0..8), rng.random_bool(0.3), 0.5);
            if seen.insert(s.id) {
                scored.push((s, score));
            }
        }
        let r = rng.random_range(1..=100usize);
        let k_max = rng.random_range(1..=40);
        let cfg = TopKConfig { rho: r as f64 / 100.0, k_max };
        let k = ceil_percent(r, scored.len()).min(k_max);
        let got: Vec<_> = select_top_k(&scored, &cfg).iter().map(|s| s.id).collect();
        let want: Vec<_> = top_k_oracle(&scored, k).iter().map(|s| s.id).collect();
        if got == want {
            topk_ok += 1;
        } else if bad.len() < 5 {
            bad.push(format!("top-k n={} rho={r}% k_max={k_max}: {} vs {}", scored.len(), got.len(), want.len()));
        }
    }

    // Fitness against set differences recomputed from the traces
    let mut global = GlobalCoverage::new();
    for _ in 0..300 {
        let s = random_seed(&b, 6, Origin::Stub, &mut rng);
        let exec = b.execute_seed(&s).unwrap();
        let cov = SeedCoverage::of_seed(&exec.traces, &s);
        let d = cov.deltas(&global);
        let sites: HashSet<_> = exec.traces.iter().flat_map(|t| t.instr_sites.iter().map(|x| (x.address, x.pc))).collect();
        let edges: HashSet<_> = exec.traces.iter().flat_map(|t| t.branch_edges.iter().copied()).collect();
        let want_i = sites.iter().filter(|x| !global.instr_sites.contains(x)).count() as u64;
        let want_b = edges.iter().filter(|x| !global.branch_edges.contains(x)).count() as u64;
        if d.delta_inst != want_i || d.delta_branch != want_b || d.fit != d.delta_branch + d.delta_inst + d.delta_raw {
            bad.push(format!("fit {d:?} vs inst {want_i} branch {want_b}"));
        }
        global.absorb(&cov);
    }

    // Operator credit: what is handed out equals the gain
    for _ in 0..1000 {
        let mut s = OperatorScheduler::default();
        let before: f64 = s.fit.iter().sum();
        let ops = s.sample(&mut rng);
        let (db, di) = (rng.random_range(0..1000), rng.random_range(0..1000));
        s.credit(&ops, db, di);
        let handed: f64 = s.fit.iter().sum::<f64>() - before;
        if handed != (db + di) as f64 {
            bad.push(format!("credit {ops:?} gain {} handed {handed}", db + di));
        }
    }

    // Probability update: clamp range, normalization, decay
    for _ in 0..1000 {
        let mut s = OperatorScheduler::new(0.05, 0.9);
        for f in s.fit.iter_mut() {
            *f = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..50.0) };
        }
        let fit = s.fit;
        s.update(&mut rng);
        let sum: f64 = s.p.iter().sum();
        let clamped = s.clamped.iter().all(|&c| (P_MIN..=P_MAX).contains(&c));
        let decayed = fit.iter().zip(&s.fit).all(|(a, b)| *b == a * 0.9);
        if !clamped || (sum - 1.0).abs() > 1e-9 || !decayed {
            bad.push(format!("update: clamped {:?} sum {sum}", s.clamped));
        }
    }

    let ok = bad.is_empty() && topk_ok == 1000;
    verdict(1, "formulas", ok, t, Duration::from_secs(10), &format!("top-k {topk_ok}/1000 {}", bad.join("; ")));
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_vm_conformance() {
    let _g = serial();
    let t = Instant::now();
    let cases = vm_cases::cases();
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| (c.run)().err().map(|m| format!("{}: {m}", c.name)))
        .collect();
    // Determinism on every corpus bundle.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut diverged = 0;
    for b in corpus() {
        for _ in 0..20 {
            let s = random_seed(&b, 8, Origin::Stub, &mut rng);
            let x = b.execute_seed(&s).unwrap();
            let y = b.execute_seed(&s).unwrap();
            let fx: Vec<u64> = x.traces.iter().map(|t| t.fingerprint()).collect();
            let fy: Vec<u64> = y.traces.iter().map(|t| t.fingerprint()).collect();
            if fx != fy || x.post != y.post {
                diverged += 1;
            }
        }
    }
    let ok = failures.is_empty() && cases.len() >= 40 && diverged == 0;
    verdict(
        2,
        "vm conformance",
        ok,
        t,
        Duration::from_secs(10),
        &format!("{}/{} micro-tests, {diverged} nondeterministic runs {}", cases.len() - failures.len(), cases.len(), failures.join("; ")),
    );
}

// ---------------------------------------------------------------- 3

/// All (writer, reader) transaction pairs, i < j, over a shared slot.
fn raw_brute(exec: &seqfuzz::corpus::Execution, seed: &Seed) -> BTreeSet<RawPair> {
    let sels = seed.selectors();
    let mut out = BTreeSet::new();
    for i in 0..exec.traces.len() {
        if !exec.traces[i].succeeded() {
            continue;
        }
        for j in i + 1..exec.traces.len() {
            for w in &exec.traces[i].storage_writes {
                for r in &exec.traces[j].storage_reads {
                    if w.address == r.address && w.slot == r.slot {
                        out.insert(RawPair {
                            address: w.address,
                            slot: w.slot,
                            writer: sels[i],
                            reader: sels[j],
                        });
                    }
                }
            }
        }
    }
    out
}

#[test]
fn criterion_3_raw_oracle() {
    let _g = serial();
    let t = Instant::now();
    let b = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut global = GlobalCoverage::new();
    let mut seen: HashSet<RawPair> = HashSet::new();
    let (mut agree, mut nonzero) = (0, 0);
    for i in 0..500 {
        // A short history keeps new pairs common.
        if i % 4 == 0 {
            global = GlobalCoverage::new();
            seen.clear();
        }
        let s = random_seed(&b, 6, Origin::Stub, &mut rng);
        let exec = b.execute_seed(&s).unwrap();
        let cov = SeedCoverage::of_seed(&exec.traces, &s);
        let brute = raw_brute(&exec, &s);
        let want = brute.iter().filter(|p| !seen.contains(p)).count() as u64;
        let got = cov.deltas(&global).delta_raw;
        agree += usize::from(got == want && cov.raw == brute);
        nonzero += usize::from(want > 0);
        seen.extend(brute);
        global.absorb(&cov);
    }
    verdict(
        3,
        "delta-RAW oracle",
        agree == 500,
        t,
        Duration::from_secs(30),
        &format!("{agree}/500 agree, {nonzero} with new pairs"),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_scheduler_convergence() {
    let _g = serial();
    let t = Instant::now();
    let mut wins = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let best = *MutationOperator::ALL.choose(&mut rng).unwrap();
        let mut s = OperatorScheduler::new(0.05, 0.9);
        for _gen in 0..50 {
            for _child in 0..40 {
                let ops = s.sample(&mut rng);
                // Expected gain 1 per operator, 10 for the best one.
                let gain: u64 = ops
                    .iter()
                    .map(|&op| if op == best { rng.random_range(0..=20) } else { rng.random_range(0..=2) })
                    .sum();
                s.credit(&ops, gain, 0);
            }
            s.update(&mut rng);
        }
        let top = s.p[best.index()];
        let unique = s.p.iter().enumerate().all(|(i, &p)| i == best.index() || p < top);
        wins += usize::from(unique);
    }
    verdict(4, "scheduler convergence", wins >= 95, t, Duration::from_secs(60), &format!("{wins}/100 trials"));
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_bug_corpus() {
    let _g = serial();
    let t = Instant::now();
    let bundles = corpus();
    let mut lines = vec![];
    let mut ok = true;
    let (mut buggy, mut benign) = (0, 0);
    let mut classes_hit: BTreeSet<BugClass> = BTreeSet::new();
    for b in &bundles {
        let expected: BTreeSet<BugClass> = b.expected_bugs.clone().unwrap_or_default().into_iter().collect();
        let r = run_campaign(b, &stub(5)).unwrap();
        let found = r.bug_classes();
        if expected.is_empty() {
            benign += 1;
        } else {
            buggy += 1;
        }
        classes_hit.extend(found.intersection(&expected).copied());
        if found != expected {
            ok = false;
            lines.push(format!("{}: expected {expected:?} got {found:?}", b.name));
        }
    }
    ok &= buggy >= 10 && benign >= 5 && classes_hit.len() == 10;
    verdict(
        5,
        "bug corpus",
        ok,
        t,
        Duration::from_secs(20 * 60),
        &format!("{buggy} buggy bundles, {} classes found, {benign} benign silent {}", classes_hit.len(), lines.join("; ")),
    );
}

// ---------------------------------------------------------------- 6

/// Taken edge of the jump guarded by the 32-byte constant.
fn magic_edge(b: &Bundle) -> BranchEdge {
    let mut after_push32 = false;
    for (pc, op) in b.code.instructions() {
        if op == opcode::PUSH32 {
            after_push32 = true;
        } else if after_push32 && op == opcode::JUMPI {
            return BranchEdge {
                address: b.contract(),
                pc: pc as u32,
                taken: true,
            };
        }
    }
    panic!("no guarded jump in {}", b.name);
}

#[test]
fn criterion_6_symbolic_lift() {
    let _g = serial();
    let t = Instant::now();
    let b = Bundle::load(&corpus_dir().join("magic_lock")).unwrap();
    let edge = magic_edge(&b);
    let mut notes = vec![];
    let mut ok = true;
    for seed in 0..5 {
        let cfg = CampaignConfig {
            no_hfe: true,
            budget_secs: Some(0.0),
            max_execs: Some(100_000),
            ..stub(60 + seed)
        };
        let r = run_campaign(&b, &cfg).unwrap();
        if r.coverage.covers_edge(&edge) || r.execs < 100_000 {
            ok = false;
            notes.push(format!("no-hfe seed {seed}: covered after {} execs", r.execs));
        }
    }
    let mut lags = vec![];
    for seed in 0..5 {
        // Long enough to see 30 s past a trigger that fires early.
        let cfg = CampaignConfig {
            budget_secs: Some(32.0),
            ..stub(60 + seed)
        };
        let r = run_campaign(&b, &cfg).unwrap();
        let first = r.triggers_of(Trigger::Symbolic).next().map(|e| e.elapsed_ms);
        match (first, r.discovery(&edge)) {
            (Some(f), Some(d)) if d.elapsed_ms <= f + 30_000 => lags.push(d.elapsed_ms.saturating_sub(f)),
            (Some(f), None) if f + 30_000 > r.wall.as_millis() as u64 => {
                ok = false;
                notes.push(format!("full seed {seed}: first symbolic at {f} ms leaves under 30 s of budget"));
            }
            (f, d) => {
                ok = false;
                notes.push(format!("full seed {seed}: first symbolic {f:?} ms, discovery {:?}", d.map(|d| d.elapsed_ms)));
            }
        }
    }
    verdict(
        6,
        "symbolic lift",
        ok,
        t,
        Duration::from_secs(5 * 60),
        &format!("no-hfe misses in 5/5 at 1e5 execs; covered {}/5, lag after trigger {lags:?} ms {}", lags.len(), notes.join("; ")),
    );
}

// ---------------------------------------------------------------- 7

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

#[test]
fn criterion_7_ablation_ordering() {
    let _g = serial();
    let t = Instant::now();
    let variants: [(&str, fn(&mut CampaignConfig)); 4] = [
        ("full", |_| {}),
        ("no-hfe", |c| c.no_hfe = true),
        ("no-mos", |c| c.no_mos = true),
        ("no-lsg", |c| c.no_lsg = true),
    ];
    const SEEDS: u64 = 10;
    // totals[variant][seed]: branch edges summed over the corpus.
    let mut totals = [[0usize; SEEDS as usize]; 4];
    let mut inversions = vec![];
    for b in corpus() {
        let mut med = [0.0; 4];
        for (i, (_, tweak)) in variants.iter().enumerate() {
            let mut runs = vec![];
            for seed in 0..SEEDS {
                let mut cfg = CampaignConfig {
                    budget_secs: Some(0.0),
                    max_execs: Some(15_000),
                    ..stub(700 + seed)
                };
                tweak(&mut cfg);
                let edges = run_campaign(&b, &cfg).unwrap().coverage.totals().1;
                totals[i][seed as usize] += edges;
                runs.push(edges);
            }
            med[i] = median(runs);
        }
        for i in 1..4 {
            if med[0] < med[i] {
                inversions.push(format!("{} full {} < {} {}", b.name, med[0], variants[i].0, med[i]));
            }
        }
    }
    let medians: Vec<f64> = totals.iter().map(|v| median(v.to_vec())).collect();
    let ok = (1..4).all(|i| medians[0] >= medians[i]);
    let shown: Vec<String> = variants.iter().zip(&medians).map(|((n, _), m)| format!("{n} {m}")).collect();
    verdict(
        7,
        "ablation ordering",
        ok,
        t,
        Duration::from_secs(30 * 60),
        &format!(
            "median corpus branch edges: {}; per-bundle median inversions: {}",
            shown.join(", "),
            if inversions.is_empty() { "none".to_string() } else { inversions.join("; ") }
        ),
    );
}

// ---------------------------------------------------------------- 8

fn outputs(r: &CampaignResult, dir: &Path) -> (Vec<u8>, Vec<u8>) {
    write_outputs(r, dir).unwrap();
    (std::fs::read(dir.join("coverage.csv")).unwrap(), std::fs::read(dir.join("bugs.jsonl")).unwrap())
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut same = 0;
    let names = ["reentrancy_bank", "magic_lock", "first_claim", "token"];
    for name in names {
        let b = Bundle::load(&corpus_dir().join(name)).unwrap();
        let cfg = CampaignConfig {
            budget_secs: Some(0.0),
            max_generations: Some(40),
            ..stub(8)
        };
        let x = outputs(&run_campaign(&b, &cfg).unwrap(), &tmp.path().join(format!("{name}-a")));
        let y = outputs(&run_campaign(&b, &cfg).unwrap(), &tmp.path().join(format!("{name}-b")));
        same += usize::from(x == y);
    }
    verdict(
        8,
        "determinism",
        same == names.len(),
        t,
        Duration::from_secs(120),
        &format!("{same}/{} bundles byte-identical", names.len()),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_9_stagnation_triggers() {
    let _g = serial();
    let t = Instant::now();
    let mut notes = vec![];

    let mut d = StagnationDetector::new(5, 0.01, 10);
    let fired: Vec<(usize, Trigger)> = (0..=10).map(|g| (g, d.check(42))).filter(|(_, x)| *x != Trigger::None).collect();
    let detector_ok = fired == [(5, Trigger::Symbolic), (10, Trigger::Reinit)];
    if !detector_ok {
        notes.push(format!("detector fired {fired:?}"));
    }

    let abi = r#"[{"type":"function","name":"f","inputs":[{"name":"x","type":"uint256"}],"stateMutability":"nonpayable"}]"#;
    let flat = Bundle::simple("flat", assemble("push 1 push 0 sstore stop").unwrap(), abi).unwrap();
    let mut runs_ok = 0;
    for seed in 0..5 {
        let cfg = CampaignConfig {
            mu: 10,
            budget_secs: Some(0.0),
            max_generations: Some(11),
            ..stub(90 + seed)
        };
        let r = run_campaign(&flat, &cfg).unwrap();
        let at: Vec<(u64, Trigger)> = r.triggers.iter().map(|e| (e.generation, e.trigger)).collect();
        if at == [(5, Trigger::Symbolic), (10, Trigger::Reinit)] {
            runs_ok += 1;
        } else {
            notes.push(format!("campaign seed {seed} fired {at:?}"));
        }
    }
    verdict(
        9,
        "stagnation triggers",
        detector_ok && runs_ok == 5,
        t,
        Duration::from_secs(10),
        &format!("detector {}, campaigns {runs_ok}/5 {}", if detector_ok { "ok" } else { "wrong" }, notes.join("; ")),
    );
}
