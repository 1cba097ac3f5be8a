use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AccountSpec, DEFAULT_LAMBDA};
use crate::symexec::SymbolicConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where seed sequences come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    /// Remote when the endpoint variable is set, stub otherwise.
    #[default]
    Auto,
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagnationConfig {
    pub sym_window: usize,
    pub sym_rel_growth: f64,
    pub reinit_window: usize,
}

impl Default for StagnationConfig {
    fn default() -> Self {
        Self {
            sym_window: 5,
            sym_rel_growth: 0.01,
            reinit_window: 10,
        }
    }
}

/// Everything a campaign reads. Loadable from TOML; absent keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Population size.
    pub mu: usize,
    /// Elite share of the population.
    pub gamma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub k_max: usize,
    pub sigma: f64,
    pub decay: f64,
    pub seq_len_max: usize,
    /// Sequences requested from the generator per seeding round.
    pub seed_count: usize,
    /// Wall-clock budget, checked between generations. Zero disables it.
    pub budget_secs: Option<f64>,
    pub max_generations: Option<u64>,
    /// Sequence executions, seeding included.
    pub max_execs: Option<u64>,
    pub rng_seed: u64,
    pub no_lsg: bool,
    pub no_mos: bool,
    pub no_hfe: bool,
    pub backend: BackendChoice,
    /// Replaces the bundle's accounts when non-empty.
    pub accounts: Vec<AccountSpec>,
    pub stagnation: StagnationConfig,
    pub symbolic: SymbolicConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            mu: 50,
            gamma: 0.25,
            lambda: DEFAULT_LAMBDA,
            rho: 0.1,
            k_max: 32,
            sigma: 0.05,
            decay: 0.9,
            seq_len_max: 8,
            seed_count: 100,
            budget_secs: Some(60.0),
            max_generations: None,
            max_execs: None,
            rng_seed: 0,
            no_lsg: false,
            no_mos: false,
            no_hfe: false,
            backend: BackendChoice::Auto,
            accounts: vec![],
            stagnation: StagnationConfig::default(),
            symbolic: SymbolicConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Number of elites, `ceil(gamma * mu)`.
    pub fn elites(&self) -> usize {
        (self.gamma * self.mu as f64 - 1e-9).ceil() as usize
    }

    pub fn wall_budget(&self) -> Option<std::time::Duration> {
        self.budget_secs
            .filter(|s| *s > 0.0 && s.is_finite())
            .map(std::time::Duration::from_secs_f64)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.mu < 2 {
            return bad("mu must be at least 2");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.gamma * (self.mu as f64) < 1.0 {
            return bad("gamma * mu must be at least 1");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho must lie in (0, 1]");
        }
        if self.k_max == 0 || self.seq_len_max == 0 {
            return bad("k_max and seq_len_max must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !(0.0..=1.0).contains(&self.decay) {
            return bad("sigma must be non-negative and decay in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.wall_budget().is_none() && self.max_generations.is_none() && self.max_execs.is_none() {
            return bad("at least one of budget_secs, max_generations, max_execs is required");
        }
        if self.budget_secs.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return bad("budget_secs must be a non-negative number");
        }
        let s = &self.stagnation;
        if s.sym_window == 0 || s.reinit_window == 0 {
            return bad("stagnation windows must be positive");
        }
        Ok(())
    }
}
