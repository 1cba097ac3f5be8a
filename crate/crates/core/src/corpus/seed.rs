use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::abi::{AbiValue, FunctionDescriptor, Mutability};
use crate::feedback::FitnessRecord;
use crate::primitives::{addr_word_map, keccak256, opt_word_hex, word_hex, Address, U256};
use crate::vm::{DEFAULT_BLOCK_NUMBER, DEFAULT_GAS_LIMIT, DEFAULT_TIMESTAMP};

/// Per-transaction block context and environment overrides.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxEnv {
    pub timestamp: u64,
    pub block_number: u64,
    pub gas_limit: u64,
    #[serde(default, with = "addr_word_map", skip_serializing_if = "BTreeMap::is_empty")]
    pub balance_overrides: BTreeMap<Address, U256>,
    #[serde(default, with = "opt_word_hex", skip_serializing_if = "Option::is_none")]
    pub call_return_override: Option<U256>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_data_size_override: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ext_code_size_override: BTreeMap<Address, u64>,
}

impl Default for TxEnv {
    fn default() -> Self {
        Self {
            timestamp: DEFAULT_TIMESTAMP,
            block_number: DEFAULT_BLOCK_NUMBER,
            gas_limit: DEFAULT_GAS_LIMIT,
            balance_overrides: BTreeMap::new(),
            call_return_override: None,
            return_data_size_override: None,
            ext_code_size_override: BTreeMap::new(),
        }
    }
}

/// One call in a sequence. `sender` indexes the bundle's account list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "TxJson", try_from = "TxJson")]
pub struct Transaction {
    pub function: FunctionDescriptor,
    pub args: Vec<AbiValue>,
    pub sender: usize,
    pub value: U256,
    pub env: TxEnv,
}

impl Transaction {
    pub fn new(function: FunctionDescriptor, args: Vec<AbiValue>, sender: usize, value: U256) -> Self {
        Self {
            function,
            args,
            sender,
            value,
            env: TxEnv::default(),
        }
    }

    pub fn selector(&self) -> [u8; 4] {
        self.function.selector
    }
}

#[derive(Serialize, Deserialize)]
struct TxJson {
    function: String,
    #[serde(default = "nonpayable", skip_serializing_if = "is_nonpayable")]
    mutability: String,
    args: Vec<String>,
    sender: usize,
    #[serde(with = "word_hex")]
    value: U256,
    #[serde(default)]
    env: TxEnv,
}

fn nonpayable() -> String {
    "nonpayable".into()
}

fn is_nonpayable(s: &str) -> bool {
    s == "nonpayable"
}

impl From<Transaction> for TxJson {
    fn from(tx: Transaction) -> Self {
        TxJson {
            function: tx.function.signature(),
            mutability: match tx.function.mutability {
                Mutability::View => "view",
                Mutability::NonPayable => "nonpayable",
                Mutability::Payable => "payable",
            }
            .into(),
            args: tx.args.iter().map(AbiValue::literal).collect(),
            sender: tx.sender,
            value: tx.value,
            env: tx.env,
        }
    }
}

impl TryFrom<TxJson> for Transaction {
    type Error = String;

    fn try_from(j: TxJson) -> Result<Self, Self::Error> {
        let mutability = match j.mutability.as_str() {
            "view" | "pure" => Mutability::View,
            "nonpayable" => Mutability::NonPayable,
            "payable" => Mutability::Payable,
            other => return Err(format!("unknown mutability `{other}`")),
        };
        let function = FunctionDescriptor::from_signature(&j.function, mutability).map_err(|e| e.to_string())?;
        if function.inputs.len() != j.args.len() {
            return Err(format!("{} takes {} arguments", j.function, function.inputs.len()));
        }
        let args = function
            .inputs
            .iter()
            .zip(&j.args)
            .map(|(t, lit)| AbiValue::parse(t, lit).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        Ok(Transaction {
            function,
            args,
            sender: j.sender,
            value: j.value,
            env: j.env,
        })
    }
}

/// Where a seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Llm,
    Stub,
    Mutation,
    Crossover,
    Symbolic,
}

/// Content hash of a transaction list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeedId(pub u64);

impl fmt::Display for SeedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for SeedId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(SeedId)
    }
}

impl Serialize for SeedId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SeedId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A transaction sequence plus bookkeeping. `id` depends only on `txs`;
/// construct through [`Seed::new`] so it stays in sync.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub id: SeedId,
    pub origin: Origin,
    pub fitness: FitnessRecord,
    pub txs: Vec<Transaction>,
}

impl Seed {
    pub fn new(txs: Vec<Transaction>, origin: Origin) -> Self {
        assert!(!txs.is_empty(), "a seed needs at least one transaction");
        Self {
            id: Self::compute_id(&txs),
            origin,
            fitness: FitnessRecord::default(),
            txs,
        }
    }

    pub fn compute_id(txs: &[Transaction]) -> SeedId {
        let canonical = serde_json::to_vec(txs).expect("transactions serialize");
        let h = keccak256(canonical);
        SeedId(u64::from_be_bytes(h[..8].try_into().unwrap()))
    }

    pub fn selectors(&self) -> Vec<[u8; 4]> {
        self.txs.iter().map(Transaction::selector).collect()
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    /// Keep the larger of the stored and the new fitness.
    pub fn record_fitness(&mut self, rec: FitnessRecord) {
        if rec.fit > self.fitness.fit {
            self.fitness = rec;
        }
    }
}
