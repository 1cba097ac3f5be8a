use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abi::{coerce_int, low_bits, AbiType, AbiValue};
use crate::corpus::{boundary_values, random_value, random_word, Bundle, Origin, Seed, Transaction};
use crate::primitives::{Address, U256};
use crate::vm::MAX_GAS_LIMIT;

/// Each operator rewrites one field of one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MutationOperator {
    Arguments,
    Account,
    TxAmount,
    GasLimit,
    Timestamp,
    BlockNumber,
    Balance,
    CallReturnValue,
    ReturnDataSize,
    ExtCodeSize,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 10] = [
        MutationOperator::Arguments,
        MutationOperator::Account,
        MutationOperator::TxAmount,
        MutationOperator::GasLimit,
        MutationOperator::Timestamp,
        MutationOperator::BlockNumber,
        MutationOperator::Balance,
        MutationOperator::CallReturnValue,
        MutationOperator::ReturnDataSize,
        MutationOperator::ExtCodeSize,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MutationOperator::Arguments => "arguments",
            MutationOperator::Account => "account",
            MutationOperator::TxAmount => "tx_amount",
            MutationOperator::GasLimit => "gas_limit",
            MutationOperator::Timestamp => "timestamp",
            MutationOperator::BlockNumber => "block_number",
            MutationOperator::Balance => "balance",
            MutationOperator::CallReturnValue => "call_return_value",
            MutationOperator::ReturnDataSize => "return_data_size",
            MutationOperator::ExtCodeSize => "ext_code_size",
        }
    }

    /// The perturbations this operator draws from.
    pub fn palette(self) -> &'static [Perturbation] {
        use Perturbation::*;
        match self {
            MutationOperator::Arguments => &[BitFlip, Increment, Decrement, Boundary, Random],
            MutationOperator::Account => &[Swap],
            MutationOperator::TxAmount | MutationOperator::Balance => &[Zero, One, Max, Double, Halve],
            MutationOperator::GasLimit => &[Halve, Decrement, Minimal, Max],
            MutationOperator::Timestamp | MutationOperator::BlockNumber => &[Increment, Decrement, Jump, Random],
            MutationOperator::CallReturnValue | MutationOperator::ReturnDataSize | MutationOperator::ExtCodeSize => {
                &[Zero, One, Random]
            }
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MutationOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationOperator::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown mutation operator `{s}`"))
    }
}

/// One palette entry. `Jump` is +86400 for timestamps and +1000 for block numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Perturbation {
    BitFlip,
    Increment,
    Decrement,
    Boundary,
    Random,
    Swap,
    Zero,
    One,
    Max,
    Double,
    Halve,
    Minimal,
    Jump,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("operator {0} does not apply to this seed")]
pub struct InapplicableOperator(pub MutationOperator);

pub const TIMESTAMP_JUMP: u64 = 86_400;
pub const BLOCK_JUMP: u64 = 1_000;
pub const MIN_GAS: u64 = 1;
const ATTEMPTS: usize = 8;

fn perturb_u64<R: Rng + ?Sized>(v: u64, p: Perturbation, jump: u64, rng: &mut R) -> u64 {
    match p {
        Perturbation::Increment => v.saturating_add(1),
        Perturbation::Decrement => v.saturating_sub(1),
        Perturbation::Jump => v.saturating_add(jump),
        Perturbation::Halve => v / 2,
        Perturbation::Minimal => MIN_GAS,
        Perturbation::Max => MAX_GAS_LIMIT,
        Perturbation::Zero => 0,
        Perturbation::One => 1,
        _ => rng.random_range(0..=u32::MAX as u64),
    }
}

fn perturb_amount(v: U256, p: Perturbation, max: U256) -> U256 {
    match p {
        Perturbation::Zero => U256::ZERO,
        Perturbation::One => U256::from(1u8),
        Perturbation::Max => max,
        Perturbation::Double => v.saturating_mul(U256::from(2u8)),
        _ => v >> 1,
    }
}

fn perturb_int<R: Rng + ?Sized>(ty: &AbiType, v: U256, p: Perturbation, bundle: &Bundle, rng: &mut R) -> AbiValue {
    let bits = ty.int_bits().unwrap_or(256);
    let signed = matches!(ty, AbiType::Int(_));
    let w = match p {
        Perturbation::BitFlip => v ^ (U256::from(1u8) << rng.random_range(0..bits as usize)),
        Perturbation::Increment => v.wrapping_add(U256::from(1u8)),
        Perturbation::Decrement => v.wrapping_sub(U256::from(1u8)),
        Perturbation::Boundary => {
            return boundary_values(ty, bundle).choose(rng).cloned().unwrap_or_else(|| AbiValue::zero(ty));
        }
        _ => random_word(rng) & low_bits(bits as usize),
    };
    let w = coerce_int(w, bits, signed);
    if signed {
        AbiValue::Int(w)
    } else {
        AbiValue::Uint(w)
    }
}

fn perturb_value<R: Rng + ?Sized>(ty: &AbiType, v: &AbiValue, p: Perturbation, bundle: &Bundle, rng: &mut R) -> AbiValue {
    match (ty, v) {
        (AbiType::Uint(_) | AbiType::Int(_), AbiValue::Uint(w) | AbiValue::Int(w)) => {
            perturb_int(ty, *w, p, bundle, rng)
        }
        (AbiType::Address, AbiValue::Address(_)) => {
            AbiValue::Address(*bundle.interesting_addresses().choose(rng).expect("accounts configured"))
        }
        (AbiType::Bool, AbiValue::Bool(b)) => AbiValue::Bool(!b),
        (AbiType::FixedBytes(_) | AbiType::Bytes, AbiValue::FixedBytes(b) | AbiValue::Bytes(b))
            if !b.is_empty() && p == Perturbation::BitFlip =>
        {
            let mut b = b.clone();
            let i = rng.random_range(0..b.len());
            b[i] ^= 1 << rng.random_range(0..8);
            if matches!(ty, AbiType::Bytes) {
                AbiValue::Bytes(b)
            } else {
                AbiValue::FixedBytes(b)
            }
        }
        (AbiType::Array(inner), AbiValue::Array(items)) if !items.is_empty() && p != Perturbation::Random => {
            let mut items = items.clone();
            let i = rng.random_range(0..items.len());
            items[i] = perturb_value(inner, &items[i], p, bundle, rng);
            AbiValue::Array(items)
        }
        _ => random_value(ty, bundle, rng),
    }
}

fn sender_balance(tx: &Transaction, bundle: &Bundle) -> U256 {
    let who = bundle.sender(tx.sender);
    tx.env.balance_overrides.get(&who).copied().unwrap_or_else(|| {
        bundle.accounts()[tx.sender % bundle.accounts().len()].balance
    })
}

/// Whether `op` can change `tx` at all.
pub fn applicable(op: MutationOperator, tx: &Transaction, bundle: &Bundle) -> bool {
    match op {
        MutationOperator::Arguments => !tx.args.is_empty(),
        MutationOperator::Account => bundle.accounts().len() > 1,
        _ => true,
    }
}

/// Apply one palette entry to the field `op` targets. Returns `None` when
/// the draw left the field unchanged.
pub fn perturb<R: Rng + ?Sized>(
    op: MutationOperator,
    p: Perturbation,
    tx: &Transaction,
    bundle: &Bundle,
    rng: &mut R,
) -> Option<Transaction> {
    let mut out = tx.clone();
    match op {
        MutationOperator::Arguments => {
            if tx.args.is_empty() {
                return None;
            }
            let i = rng.random_range(0..tx.args.len());
            out.args[i] = perturb_value(&tx.function.inputs[i], &tx.args[i], p, bundle, rng);
        }
        MutationOperator::Account => {
            let n = bundle.accounts().len();
            if n < 2 {
                return None;
            }
            let shift = rng.random_range(1..n);
            out.sender = (tx.sender % n + shift) % n;
        }
        MutationOperator::TxAmount => {
            out.value = perturb_amount(tx.value, p, sender_balance(tx, bundle));
        }
        MutationOperator::Balance => {
            let who = bundle.sender(tx.sender);
            let v = perturb_amount(sender_balance(tx, bundle), p, U256::MAX);
            out.env.balance_overrides.insert(who, v);
        }
        MutationOperator::GasLimit => {
            out.env.gas_limit = perturb_u64(tx.env.gas_limit, p, 0, rng).clamp(MIN_GAS, MAX_GAS_LIMIT);
        }
        MutationOperator::Timestamp => {
            out.env.timestamp = perturb_u64(tx.env.timestamp, p, TIMESTAMP_JUMP, rng);
        }
        MutationOperator::BlockNumber => {
            out.env.block_number = perturb_u64(tx.env.block_number, p, BLOCK_JUMP, rng);
        }
        MutationOperator::CallReturnValue => {
            out.env.call_return_override = Some(match p {
                Perturbation::Zero => U256::ZERO,
                Perturbation::One => U256::from(1u8),
                _ => U256::from(rng.random_range(2u64..=u8::MAX as u64)),
            });
        }
        MutationOperator::ReturnDataSize => {
            out.env.return_data_size_override = Some(perturb_u64(0, p, 0, rng) % 1025);
        }
        MutationOperator::ExtCodeSize => {
            let targets: Vec<Address> = bundle.interesting_addresses();
            let who = *targets.choose(rng).expect("accounts configured");
            let size = perturb_u64(0, p, 0, rng) % 0x6001;
            out.env.ext_code_size_override.insert(who, size);
        }
    }
    (out != *tx).then_some(out)
}

/// Mutate one uniformly chosen applicable transaction of `seed`.
pub fn apply<R: Rng + ?Sized>(
    op: MutationOperator,
    seed: &Seed,
    bundle: &Bundle,
    rng: &mut R,
) -> Result<Seed, InapplicableOperator> {
    let candidates: Vec<usize> = (0..seed.txs.len()).filter(|&i| applicable(op, &seed.txs[i], bundle)).collect();
    if candidates.is_empty() {
        return Err(InapplicableOperator(op));
    }
    for _ in 0..ATTEMPTS {
        let i = *candidates.choose(rng).unwrap();
        let p = *op.palette().choose(rng).unwrap();
        if let Some(tx) = perturb(op, p, &seed.txs[i], bundle, rng) {
            let mut txs = seed.txs.clone();
            txs[i] = tx;
            return Ok(Seed::new(txs, Origin::Mutation));
        }
    }
    Err(InapplicableOperator(op))
}
