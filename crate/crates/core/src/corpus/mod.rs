//! Seeds, contract bundles, pre-fuzz scoring, top-K selection and the
//! on-disk seed directory.

mod bundle;
mod seed;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bundle::{
    AccountSpec, AttackerSpec, Bundle, BundleError, Execution, Genesis, Role, Roles, ScriptedCallSpec,
    DEFAULT_ATTACKER, DEFAULT_CONTRACT, DEFAULT_OWNER, DEFAULT_USER,
};
pub use seed::{Origin, Seed, SeedId, Transaction, TxEnv};

use crate::abi::{coerce_int, low_bits, AbiType, AbiValue, FunctionDescriptor};
use crate::primitives::{ether, keccak256, Address, U256};
use crate::vm::VmError;

pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreFuzzScore {
    pub coverage: u64,
    pub exception: u8,
    pub lambda: f64,
    pub score: f64,
}

impl PreFuzzScore {
    pub fn new(coverage: u64, exception: bool, lambda: f64) -> Self {
        let exception = exception as u8;
        Self {
            coverage,
            exception,
            lambda,
            score: coverage as f64 + lambda * exception as f64,
        }
    }
}

/// Score a seed on a fresh copy of the bundle's initial state.
pub fn prefuzz_score(seed: &Seed, bundle: &Bundle, lambda: f64) -> Result<PreFuzzScore, VmError> {
    let exec = bundle.execute_seed(seed)?;
    let mut sites = HashSet::new();
    let mut edges = HashSet::new();
    for t in &exec.traces {
        sites.extend(t.instr_sites.iter().map(|s| (s.address, s.pc)));
        edges.extend(t.branch_edges.iter().copied());
    }
    let exception = exec.traces.iter().any(|t| !t.exception.is_none());
    Ok(PreFuzzScore::new((sites.len() + edges.len()) as u64, exception, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKConfig {
    pub rho: f64,
    pub k_max: usize,
}

impl Default for TopKConfig {
    fn default() -> Self {
        Self { rho: 0.1, k_max: 32 }
    }
}

impl TopKConfig {
    /// `min(k_max, ceil(rho * n))`, never below 1 for a non-empty pool.
    /// The ceiling tolerates float error so that `0.1 * 100` gives 10.
    pub fn size(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let k = (self.rho * n as f64 - 1e-9).ceil().max(1.0) as usize;
        k.min(self.k_max).min(n)
    }
}

pub fn top_k_size(n: usize, cfg: &TopKConfig) -> usize {
    cfg.size(n)
}

/// Highest scores first; ties go to the smaller seed id.
pub fn select_top_k(scored: &[(Seed, PreFuzzScore)], cfg: &TopKConfig) -> Vec<Seed> {
    let mut order: Vec<&(Seed, PreFuzzScore)> = scored.iter().collect();
    order.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.id.cmp(&b.0.id)));
    order.into_iter().take(cfg.size(scored.len())).map(|(s, _)| s.clone()).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt corpus entry {path}: {msg}")]
    CorruptCorpus { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write each seed to `<dir>/<id>.json`, replacing the directory's seeds.
pub fn persist(pool: &[Seed], dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    for seed in pool {
        let path = dir.join(format!("{}.json", seed.id));
        let text = serde_json::to_string_pretty(seed).expect("seed serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn load_seed(path: &Path) -> Result<Seed, CorpusError> {
    let corrupt = |msg: String| CorpusError::CorruptCorpus {
        path: path.to_path_buf(),
        msg,
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let seed: Seed = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if seed.txs.is_empty() {
        return Err(corrupt("no transactions".into()));
    }
    let actual = Seed::compute_id(&seed.txs);
    if actual != seed.id {
        return Err(corrupt(format!("id {} does not match content hash {actual}", seed.id)));
    }
    Ok(seed)
}

/// Load every `*.json` seed in `dir`, sorted by id.
pub fn load(dir: &Path) -> Result<Vec<Seed>, CorpusError> {
    let mut pool = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            pool.push(load_seed(&path)?);
        }
    }
    pool.sort_by_key(|s| s.id);
    Ok(pool)
}

/// A constant random search will not hit: keccak("magic") cut to `bits`.
pub fn magic_constant(bits: u16) -> U256 {
    U256::from_be_bytes(keccak256(b"magic")) & low_bits(bits as usize)
}

/// Edge values for a type: zero, one, all-ones of the width, the type
/// maximum and a hash-derived constant.
pub fn boundary_values(ty: &AbiType, bundle: &Bundle) -> Vec<AbiValue> {
    boundary_values_among(ty, &bundle.interesting_addresses())
}

/// [`boundary_values`] with an explicit address pool.
pub fn boundary_values_among(ty: &AbiType, addresses: &[Address]) -> Vec<AbiValue> {
    let one = U256::from(1u8);
    let mut out: Vec<AbiValue> = match ty {
        AbiType::Uint(bits) => [U256::ZERO, one, low_bits(*bits as usize), magic_constant(*bits)]
            .into_iter()
            .map(AbiValue::Uint)
            .collect(),
        AbiType::Int(bits) => {
            let max = ty.max_value().expect("integer type");
            [U256::ZERO, one, U256::MAX, max, coerce_int(max + one, *bits, true), magic_constant(*bits)]
                .into_iter()
                .map(|v| AbiValue::Int(coerce_int(v, *bits, true)))
                .collect()
        }
        AbiType::Address => addresses.iter().copied().map(AbiValue::Address).collect(),
        AbiType::Bool => vec![AbiValue::Bool(false), AbiValue::Bool(true)],
        AbiType::FixedBytes(n) => vec![
            AbiValue::FixedBytes(vec![0; *n as usize]),
            AbiValue::FixedBytes(vec![0xff; *n as usize]),
        ],
        AbiType::Bytes => vec![AbiValue::Bytes(vec![]), AbiValue::Bytes(vec![0xff; 32])],
        AbiType::String => vec![AbiValue::String(String::new()), AbiValue::String("a".into())],
        AbiType::Array(inner) => {
            let first = boundary_values_among(inner, addresses).into_iter().next().unwrap_or_else(|| AbiValue::zero(inner));
            vec![AbiValue::Array(vec![]), AbiValue::Array(vec![first])]
        }
    };
    let mut seen = HashSet::new();
    out.retain(|v| seen.insert(v.clone()));
    out
}

pub fn random_word<R: Rng + ?Sized>(rng: &mut R) -> U256 {
    U256::from_limbs([rng.random(), rng.random(), rng.random(), rng.random()])
}

/// Random value of `ty`: half the time a boundary value, otherwise random
/// bits, with small magnitudes favoured for integers.
pub fn random_value<R: Rng + ?Sized>(ty: &AbiType, bundle: &Bundle, rng: &mut R) -> AbiValue {
    if rng.random_bool(0.5) {
        if let Some(v) = boundary_values(ty, bundle).choose(rng) {
            return v.clone();
        }
    }
    match ty {
        AbiType::Uint(_) | AbiType::Int(_) | AbiType::Bool => {
            let raw = if rng.random_bool(0.5) {
                U256::from(rng.random_range(0u64..=1000))
            } else {
                random_word(rng)
            };
            AbiValue::from_word(ty, raw).expect("integer-like type")
        }
        AbiType::Address => {
            AbiValue::Address(*bundle.interesting_addresses().choose(rng).expect("accounts configured"))
        }
        AbiType::FixedBytes(n) => AbiValue::FixedBytes((0..*n).map(|_| rng.random()).collect()),
        AbiType::Bytes => {
            let len = rng.random_range(0..=64);
            AbiValue::Bytes((0..len).map(|_| rng.random()).collect())
        }
        AbiType::String => {
            let len = rng.random_range(0..=16);
            AbiValue::String((0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
        }
        AbiType::Array(inner) => {
            let len = rng.random_range(0..=3);
            AbiValue::Array((0..len).map(|_| random_value(inner, bundle, rng)).collect())
        }
    }
}

/// Call values tried for payable functions.
pub fn payable_values() -> [U256; 3] {
    [U256::ZERO, U256::from(1u8), ether(1)]
}

pub fn random_call<R: Rng + ?Sized>(function: &FunctionDescriptor, bundle: &Bundle, rng: &mut R) -> Transaction {
    let args = function.inputs.iter().map(|t| random_value(t, bundle, rng)).collect();
    let value = if function.payable {
        *payable_values().choose(rng).unwrap()
    } else {
        U256::ZERO
    };
    let sender = rng.random_range(0..bundle.accounts().len());
    Transaction::new(function.clone(), args, sender, value)
}

/// Uniform random state-changing call. View functions are used only when
/// the ABI has nothing else.
pub fn random_transaction<R: Rng + ?Sized>(bundle: &Bundle, rng: &mut R) -> Transaction {
    let mutating: Vec<&FunctionDescriptor> = bundle.abi.iter().filter(|f| !f.is_view()).collect();
    let pool: Vec<&FunctionDescriptor> = if mutating.is_empty() {
        bundle.abi.iter().collect()
    } else {
        mutating
    };
    let f = pool.choose(rng).expect("bundle ABI has functions");
    random_call(f, bundle, rng)
}

pub fn random_seed<R: Rng + ?Sized>(bundle: &Bundle, max_len: usize, origin: Origin, rng: &mut R) -> Seed {
    let len = rng.random_range(1..=max_len.max(1));
    Seed::new((0..len).map(|_| random_transaction(bundle, rng)).collect(), origin)
}
