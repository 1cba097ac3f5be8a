//! The generational loop: seeding, evaluation, elitist selection,
//! RAW-aware crossover, scheduled mutation, stagnation handling.

mod config;
mod output;

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    prefuzz_score, random_seed, select_top_k, Bundle, Origin, PreFuzzScore, Seed, TopKConfig,
};
use crate::feedback::{raw_index_pairs, GlobalCoverage, SeedCoverage, StagnationDetector, Trigger};
use crate::llmgen::{GenerationRequest, HintInjector, PromptHint, RemoteBackend, SeedGenerator};
use crate::mutate::{crossover_raw_aware, mutate_child, MutationOperator, OperatorScheduler};
use crate::oracles::{detect_all, BugClass, BugReport};
use crate::primitives::Address;
use crate::symexec::{explore_many, FlipAttempt};
use crate::vm::{behavior_metrics, BehaviorMetrics, BranchEdge};

pub use config::{BackendChoice, CampaignConfig, ConfigError, StagnationConfig};
pub use output::{read_summary, render_report, write_outputs, CampaignSummary, OutputError};

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("bundle: {0}")]
    Bundle(String),
}

/// One operator's state at the end of a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRow {
    pub operator: MutationOperator,
    pub fit: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u64,
    pub population: usize,
    pub best_fit: u64,
    pub mean_fit: f64,
    pub instructions: usize,
    pub branches: usize,
    pub raw_pairs: usize,
    /// Cumulative sequence executions.
    pub execs: u64,
    /// Cumulative distinct bug reports.
    pub bugs: usize,
    pub trigger: Trigger,
    pub operators: Vec<OperatorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub generation: u64,
    pub trigger: Trigger,
    pub elapsed_ms: u64,
    pub hint: Option<String>,
    /// Validated seeds produced by branch flipping.
    pub symbolic_seeds: usize,
    pub flips: Vec<FlipAttempt>,
}

/// First time a branch edge entered global coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub edge: BranchEdge,
    pub generation: u64,
    pub execs: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub bundle: String,
    pub config: CampaignConfig,
    pub generations: Vec<GenerationReport>,
    pub coverage: GlobalCoverage,
    pub bugs: Vec<BugReport>,
    /// The seed behind each report, same order as `bugs`.
    pub witnesses: Vec<Seed>,
    pub population: Vec<Seed>,
    pub scheduler: OperatorScheduler,
    pub triggers: Vec<TriggerEvent>,
    pub discoveries: Vec<Discovery>,
    pub execs: u64,
    /// Executions that raised a VM error and were dropped.
    pub faults: u64,
    pub wall: Duration,
    pub used_stub: bool,
}

impl CampaignResult {
    pub fn bug_classes(&self) -> BTreeSet<BugClass> {
        self.bugs.iter().map(|b| b.class).collect()
    }

    pub fn triggers_of(&self, t: Trigger) -> impl Iterator<Item = &TriggerEvent> {
        self.triggers.iter().filter(move |e| e.trigger == t)
    }

    pub fn discovery(&self, edge: &BranchEdge) -> Option<&Discovery> {
        self.discoveries.iter().find(|d| d.edge == *edge)
    }
}

#[derive(Debug, Clone)]
struct Individual {
    seed: Seed,
    /// Operators that produced this seed; credited once it is evaluated.
    ops: Vec<MutationOperator>,
}

impl Individual {
    fn fresh(seed: Seed) -> Self {
        Self { seed, ops: vec![] }
    }
}

struct Evaluated {
    seed: Seed,
    raw: BTreeSet<(usize, usize)>,
    metrics: BehaviorMetrics,
}

fn generator_for(cfg: &CampaignConfig) -> Result<SeedGenerator, ConfigError> {
    Ok(match cfg.backend {
        BackendChoice::Stub => SeedGenerator::stub(cfg.rng_seed),
        BackendChoice::Auto => SeedGenerator::from_env(cfg.rng_seed),
        BackendChoice::Remote => {
            let remote = RemoteBackend::from_env().ok_or_else(|| {
                ConfigError::Invalid(format!("backend = \"remote\" needs {}", crate::llmgen::ENDPOINT_VAR))
            })?;
            SeedGenerator::with_fallback(Box::new(remote), cfg.rng_seed)
        }
    })
}

struct Campaign<'a> {
    bundle: &'a Bundle,
    cfg: &'a CampaignConfig,
    rng: ChaCha8Rng,
    generator: SeedGenerator,
    global: GlobalCoverage,
    scheduler: OperatorScheduler,
    detector: StagnationDetector,
    hints: HintInjector,
    hint: Option<PromptHint>,
    round: u64,
    bug_keys: HashSet<(BugClass, Address, u32)>,
    bugs: Vec<BugReport>,
    witnesses: Vec<Seed>,
    discoveries: Vec<Discovery>,
    execs: u64,
    faults: u64,
    start: Instant,
    generation: u64,
}

impl Campaign<'_> {
    fn elapsed_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn exhausted(&self) -> bool {
        let c = self.cfg;
        c.wall_budget().is_some_and(|b| self.start.elapsed() >= b)
            || c.max_generations.is_some_and(|g| self.generation >= g)
            || c.max_execs.is_some_and(|e| self.execs >= e)
    }

    fn random(&mut self, count: usize) -> Vec<Seed> {
        (0..count)
            .map(|_| random_seed(self.bundle, self.cfg.seq_len_max, Origin::Stub, &mut self.rng))
            .collect()
    }

    /// Generate, score, keep the top K, pad with random seeds to mu.
    fn seed_population(&mut self) -> Vec<Individual> {
        let cfg = self.cfg;
        let candidates = if cfg.no_lsg {
            self.random(cfg.seed_count)
        } else {
            let req = GenerationRequest {
                count: cfg.seed_count,
                max_len: cfg.seq_len_max,
                hint: self.hint.as_ref(),
                round: self.round,
            };
            match self.generator.generate(self.bundle, &req) {
                Ok((_, seeds)) => seeds,
                Err(e) => {
                    log::warn!("seed generation failed, using random seeds: {e}");
                    vec![]
                }
            }
        };
        self.round += 1;
        let mut scored: Vec<(Seed, PreFuzzScore)> = vec![];
        for s in candidates {
            self.execs += 1;
            match prefuzz_score(&s, self.bundle, cfg.lambda) {
                Ok(score) => scored.push((s, score)),
                Err(e) => {
                    self.faults += 1;
                    log::warn!("seed {} dropped: {e}", s.id);
                }
            }
        }
        let top = TopKConfig {
            rho: cfg.rho,
            k_max: cfg.k_max,
        };
        let mut pop: Vec<Seed> = select_top_k(&scored, &top);
        pop.truncate(cfg.mu);
        let missing = cfg.mu - pop.len();
        pop.extend(self.random(missing));
        pop.into_iter().map(Individual::fresh).collect()
    }

    /// Execute every individual, in seed-id order, against the coverage of
    /// the previous generation; then commit all coverage at once.
    fn evaluate(&mut self, mut pop: Vec<Individual>) -> Vec<Evaluated> {
        pop.sort_by_key(|i| i.seed.id);
        let mut out = vec![];
        let mut covs: Vec<SeedCoverage> = vec![];
        for Individual { mut seed, ops } in pop {
            self.execs += 1;
            let exec = match self.bundle.execute_seed(&seed) {
                Ok(e) => e,
                Err(e) => {
                    self.faults += 1;
                    log::warn!("seed {} dropped: {e}", seed.id);
                    continue;
                }
            };
            let cov = SeedCoverage::of_seed(&exec.traces, &seed);
            let rec = cov.deltas(&self.global);
            seed.record_fitness(rec);
            if !self.cfg.no_mos {
                self.scheduler.credit(&ops, rec.delta_branch, rec.delta_inst);
            }
            for r in detect_all(&seed, &exec, self.bundle) {
                if self.bug_keys.insert((r.class, r.address, r.pc)) {
                    log::info!("{} at {}:{} in seed {}", r.class, r.address, r.pc, seed.id);
                    self.bugs.push(r);
                    self.witnesses.push(seed.clone());
                }
            }
            covs.push(cov);
            out.push(Evaluated {
                raw: raw_index_pairs(&exec.traces),
                metrics: behavior_metrics(&exec.traces),
                seed,
            });
        }
        let elapsed_ms = self.elapsed_ms();
        for cov in &covs {
            let mut fresh: Vec<BranchEdge> =
                cov.edges.iter().filter(|e| !self.global.covers_edge(e)).copied().collect();
            fresh.sort();
            self.discoveries.extend(fresh.into_iter().map(|edge| Discovery {
                edge,
                generation: self.generation,
                execs: self.execs,
                elapsed_ms,
            }));
            self.global.absorb(cov);
        }
        out
    }

    fn report(&self, evaluated: &[Evaluated], trigger: Trigger) -> GenerationReport {
        let fits: Vec<u64> = evaluated.iter().map(|e| e.seed.fitness.fit).collect();
        let (instructions, branches, raw_pairs) = self.global.totals();
        GenerationReport {
            generation: self.generation,
            population: evaluated.len(),
            best_fit: fits.iter().copied().max().unwrap_or(0),
            mean_fit: if fits.is_empty() {
                0.0
            } else {
                fits.iter().sum::<u64>() as f64 / fits.len() as f64
            },
            instructions,
            branches,
            raw_pairs,
            execs: self.execs,
            bugs: self.bugs.len(),
            trigger,
            operators: MutationOperator::ALL
                .iter()
                .map(|&op| OperatorRow {
                    operator: op,
                    fit: self.scheduler.fit[op.index()],
                    p: self.scheduler.p[op.index()],
                })
                .collect(),
        }
    }

    /// Parents for the next generation: the top `ceil(gamma * mu)` by fit,
    /// or a uniform random draw when the scheduler is disabled.
    fn select(&mut self, mut evaluated: Vec<Evaluated>) -> Vec<Evaluated> {
        let k = self.cfg.elites().min(evaluated.len());
        if self.cfg.no_mos {
            let mut picked: Vec<usize> = sample(&mut self.rng, evaluated.len(), k).into_vec();
            picked.sort_unstable();
            let mut keep = vec![];
            for (i, e) in evaluated.into_iter().enumerate() {
                if picked.binary_search(&i).is_ok() {
                    keep.push(e);
                }
            }
            keep
        } else {
            evaluated.sort_by(|a, b| b.seed.fitness.fit.cmp(&a.seed.fitness.fit).then(a.seed.id.cmp(&b.seed.id)));
            evaluated.truncate(k);
            evaluated
        }
    }

    fn breed(&mut self, parents: &[Evaluated], injected: Vec<Seed>) -> Vec<Individual> {
        let mu = self.cfg.mu;
        let mut next: Vec<Individual> = parents.iter().map(|p| Individual::fresh(p.seed.clone())).collect();
        next.extend(injected.into_iter().take(mu.saturating_sub(next.len())).map(Individual::fresh));
        while next.len() < mu {
            let (i, j) = if parents.len() >= 2 {
                let v = sample(&mut self.rng, parents.len(), 2);
                (v.index(0), v.index(1))
            } else {
                (0, 0)
            };
            let (a, b) = (&parents[i], &parents[j]);
            let (c1, c2) = crossover_raw_aware(&a.seed, &a.raw, &b.seed, &b.raw, self.cfg.seq_len_max, &mut self.rng);
            for c in [c1, c2] {
                if next.len() < mu {
                    let (child, ops) = mutate_child(&self.scheduler, &c, self.bundle, &mut self.rng);
                    next.push(Individual { seed: child, ops });
                }
            }
        }
        next
    }

    fn run(mut self) -> CampaignResult {
        let mut population = self.seed_population();
        let mut generations = vec![];
        let mut triggers = vec![];
        let mut last: Vec<Seed> = vec![];
        while !self.exhausted() {
            let evaluated = self.evaluate(population);
            if !self.cfg.no_mos {
                self.scheduler.update(&mut self.rng);
            }
            let (_, branches, _) = self.global.totals();
            let trigger = self.detector.check(branches as u64);
            generations.push(self.report(&evaluated, trigger));
            last = evaluated.iter().map(|e| e.seed.clone()).collect();

            let mut ranked: Vec<&Evaluated> = evaluated.iter().collect();
            ranked.sort_by(|a, b| b.seed.fitness.fit.cmp(&a.seed.fitness.fit).then(a.seed.id.cmp(&b.seed.id)));
            let top_metrics = ranked.first().map(|e| e.metrics).unwrap_or_default();

            let mut injected = vec![];
            if trigger != Trigger::None {
                self.hint = self.hints.inject_hint(&top_metrics);
                let mut event = TriggerEvent {
                    generation: self.generation,
                    trigger,
                    elapsed_ms: self.elapsed_ms(),
                    hint: self.hint.as_ref().map(|h| h.text.clone()),
                    symbolic_seeds: 0,
                    flips: vec![],
                };
                if trigger == Trigger::Symbolic && !self.cfg.no_hfe {
                    let ex = explore_many(self.bundle, ranked.iter().map(|e| &e.seed), &self.global, &self.cfg.symbolic);
                    log::debug!(
                        "generation {}: {} flips, {} seeds",
                        self.generation,
                        ex.attempts.len(),
                        ex.seeds.len()
                    );
                    event.symbolic_seeds = ex.seeds.len();
                    event.flips = ex.attempts;
                    injected = ex.seeds;
                }
                triggers.push(event);
            }
            self.generation += 1;

            population = if trigger == Trigger::Reinit || evaluated.is_empty() {
                log::debug!("generation {}: reinitializing population", self.generation - 1);
                self.seed_population()
            } else {
                let parents = self.select(evaluated);
                self.breed(&parents, injected)
            };
        }
        let (_, branches, _) = self.global.totals();
        log::info!(
            "{}: {} generations, {} execs, {} branch edges, {} bugs",
            self.bundle.name,
            self.generation,
            self.execs,
            branches,
            self.bugs.len()
        );
        CampaignResult {
            bundle: self.bundle.name.clone(),
            config: self.cfg.clone(),
            generations,
            coverage: self.global,
            bugs: self.bugs,
            witnesses: self.witnesses,
            population: last,
            scheduler: self.scheduler,
            triggers,
            discoveries: self.discoveries,
            execs: self.execs,
            faults: self.faults,
            wall: self.start.elapsed(),
            used_stub: self.generator.uses_stub(),
        }
    }
}

/// Run a whole campaign on `bundle`. Contract faults never abort the run;
/// the offending seed is dropped and counted.
pub fn run_campaign(bundle: &Bundle, cfg: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    cfg.validate()?;
    let with_accounts;
    let bundle = if cfg.accounts.is_empty() {
        bundle
    } else {
        with_accounts = bundle.with_accounts(&cfg.accounts).map_err(CampaignError::Bundle)?;
        &with_accounts
    };
    if bundle.abi.is_empty() {
        return Err(CampaignError::Bundle(format!("{}: ABI has no functions", bundle.name)));
    }
    let st = &cfg.stagnation;
    let c = Campaign {
        bundle,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        generator: generator_for(cfg)?,
        global: GlobalCoverage::new(),
        scheduler: OperatorScheduler::new(cfg.sigma, cfg.decay),
        detector: StagnationDetector::new(st.sym_window, st.sym_rel_growth, st.reinit_window),
        hints: HintInjector::new(),
        hint: None,
        round: 0,
        bug_keys: HashSet::new(),
        bugs: vec![],
        witnesses: vec![],
        discoveries: vec![],
        execs: 0,
        faults: 0,
        start: Instant::now(),
        generation: 0,
    };
    Ok(c.run())
}

/// Only the seeding stage: generated, scored and top-K selected seeds, in
/// selection order.
pub fn seed_corpus(bundle: &Bundle, cfg: &CampaignConfig, count: usize) -> Result<Vec<(Seed, PreFuzzScore)>, CampaignError> {
    cfg.validate()?;
    let generator = generator_for(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let seeds = if cfg.no_lsg {
        (0..count)
            .map(|_| random_seed(bundle, cfg.seq_len_max, Origin::Stub, &mut rng))
            .collect()
    } else {
        let req = GenerationRequest {
            count,
            max_len: cfg.seq_len_max,
            hint: None,
            round: 0,
        };
        generator.generate(bundle, &req).map(|(_, s)| s).unwrap_or_else(|e| {
            log::warn!("seed generation failed: {e}");
            vec![]
        })
    };
    let mut scored: Vec<(Seed, PreFuzzScore)> = seeds
        .into_iter()
        .filter_map(|s| prefuzz_score(&s, bundle, cfg.lambda).ok().map(|p| (s, p)))
        .collect();
    scored.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.id.cmp(&b.0.id)));
    Ok(scored)
}
