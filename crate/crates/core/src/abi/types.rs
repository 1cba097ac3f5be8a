use std::fmt;
use std::str::FromStr;

use crate::primitives::{parse_word, Address, U256};

/// A supported ABI parameter type. Array elements are static elementary types.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbiType {
    Uint(u16),
    Int(u16),
    Address,
    Bool,
    FixedBytes(u8),
    Bytes,
    String,
    Array(Box<AbiType>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported ABI type `{0}`")]
pub struct TypeParseError(pub String);

impl AbiType {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, AbiType::Bytes | AbiType::String | AbiType::Array(_))
    }

    /// Bit width of integer types.
    pub fn int_bits(&self) -> Option<u16> {
        match self {
            AbiType::Uint(n) | AbiType::Int(n) => Some(*n),
            _ => None,
        }
    }

    /// Largest value of an unsigned type, or largest positive value of a signed one.
    pub fn max_value(&self) -> Option<U256> {
        match self {
            AbiType::Uint(n) => Some(low_bits(*n as usize)),
            AbiType::Int(n) => Some(low_bits(*n as usize - 1)),
            AbiType::Bool => Some(U256::from(1u8)),
            AbiType::Address => Some(low_bits(160)),
            _ => None,
        }
    }
}

/// `2^k - 1` (all ones for k >= 256).
pub fn low_bits(k: usize) -> U256 {
    if k >= 256 {
        U256::MAX
    } else {
        (U256::from(1u8) << k) - U256::from(1u8)
    }
}

impl fmt::Display for AbiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbiType::Uint(n) => write!(f, "uint{n}"),
            AbiType::Int(n) => write!(f, "int{n}"),
            AbiType::Address => f.write_str("address"),
            AbiType::Bool => f.write_str("bool"),
            AbiType::FixedBytes(n) => write!(f, "bytes{n}"),
            AbiType::Bytes => f.write_str("bytes"),
            AbiType::String => f.write_str("string"),
            AbiType::Array(t) => write!(f, "{t}[]"),
        }
    }
}

fn int_width(digits: &str, full: &str) -> Result<u16, TypeParseError> {
    if digits.is_empty() {
        return Ok(256);
    }
    match digits.parse::<u16>() {
        Ok(n) if n % 8 == 0 && (8..=256).contains(&n) && !digits.starts_with('0') => Ok(n),
        _ => Err(TypeParseError(full.to_string())),
    }
}

impl FromStr for AbiType {
    type Err = TypeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TypeParseError(s.to_string());
        if let Some(inner) = s.strip_suffix("[]") {
            let elem: AbiType = inner.parse()?;
            if elem.is_dynamic() {
                return Err(err());
            }
            return Ok(AbiType::Array(Box::new(elem)));
        }
        if s.contains('[') || s.contains('(') {
            return Err(err());
        }
        match s {
            "address" => return Ok(AbiType::Address),
            "bool" => return Ok(AbiType::Bool),
            "bytes" => return Ok(AbiType::Bytes),
            "string" => return Ok(AbiType::String),
            _ => {}
        }
        if let Some(d) = s.strip_prefix("uint") {
            return int_width(d, s).map(AbiType::Uint);
        }
        if let Some(d) = s.strip_prefix("int") {
            return int_width(d, s).map(AbiType::Int);
        }
        if let Some(d) = s.strip_prefix("bytes") {
            return match d.parse::<u8>() {
                Ok(n) if (1..=32).contains(&n) && !d.starts_with('0') => Ok(AbiType::FixedBytes(n)),
                _ => Err(err()),
            };
        }
        Err(err())
    }
}

/// A concrete argument. Integers are held as 256-bit words; signed values in
/// two's complement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbiValue {
    Uint(U256),
    Int(U256),
    Address(Address),
    Bool(bool),
    FixedBytes(Vec<u8>),
    Bytes(Vec<u8>),
    String(String),
    Array(Vec<AbiValue>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot read `{literal}` as {ty}")]
pub struct LiteralError {
    pub literal: String,
    pub ty: String,
}

/// Reduce `v` modulo `2^bits`; for signed types then sign-extend to 256 bits.
pub fn coerce_int(v: U256, bits: u16, signed: bool) -> U256 {
    let bits = bits as usize;
    if bits >= 256 {
        return v;
    }
    let reduced = v & low_bits(bits);
    if signed && reduced.bit(bits - 1) {
        reduced | !low_bits(bits)
    } else {
        reduced
    }
}

fn parse_integer(lit: &str) -> Option<U256> {
    let lit = lit.trim();
    if let Some(rest) = lit.strip_prefix('-') {
        parse_word(rest).map(|v| v.wrapping_neg())
    } else {
        parse_word(lit)
    }
}

fn parse_hex_bytes(lit: &str) -> Option<Vec<u8>> {
    let digits = lit.trim().strip_prefix("0x").unwrap_or(lit.trim());
    if digits.len() % 2 == 1 {
        hex::decode(format!("0{digits}")).ok()
    } else {
        hex::decode(digits).ok()
    }
}

/// Split a bracketed list literal `[a,b,c]` into its items.
fn list_items(lit: &str) -> Option<Vec<&str>> {
    let inner = lit.trim().strip_prefix('[')?.strip_suffix(']')?;
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    Some(inner.split(',').map(str::trim).collect())
}

impl AbiValue {
    /// Read a literal as `ty`, coercing integers into range and zero-padding addresses.
    pub fn parse(ty: &AbiType, literal: &str) -> Result<AbiValue, LiteralError> {
        let fail = || LiteralError {
            literal: literal.to_string(),
            ty: ty.to_string(),
        };
        let lit = literal.trim();
        Ok(match ty {
            AbiType::Uint(n) => AbiValue::Uint(coerce_int(parse_integer(lit).ok_or_else(fail)?, *n, false)),
            AbiType::Int(n) => AbiValue::Int(coerce_int(parse_integer(lit).ok_or_else(fail)?, *n, true)),
            AbiType::Address => {
                if lit.starts_with("0x") {
                    AbiValue::Address(lit.parse().map_err(|_| fail())?)
                } else {
                    // Decimal account numbers are accepted as well.
                    let v = parse_word(lit).ok_or_else(fail)?;
                    AbiValue::Address(Address::from_word(v))
                }
            }
            AbiType::Bool => match lit {
                "true" | "1" => AbiValue::Bool(true),
                "false" | "0" => AbiValue::Bool(false),
                _ => return Err(fail()),
            },
            AbiType::FixedBytes(n) => {
                let mut b = parse_hex_bytes(lit).ok_or_else(fail)?;
                if b.len() > *n as usize {
                    return Err(fail());
                }
                b.resize(*n as usize, 0);
                AbiValue::FixedBytes(b)
            }
            AbiType::Bytes => AbiValue::Bytes(parse_hex_bytes(lit).ok_or_else(fail)?),
            AbiType::String => {
                let unquoted = lit
                    .strip_prefix('"')
                    .and_then(|s| s.strip_suffix('"'))
                    .unwrap_or(literal);
                AbiValue::String(unquoted.to_string())
            }
            AbiType::Array(elem) => {
                let items = list_items(lit).ok_or_else(fail)?;
                AbiValue::Array(
                    items
                        .into_iter()
                        .map(|i| AbiValue::parse(elem, i))
                        .collect::<Result<_, _>>()?,
                )
            }
        })
    }

    /// Canonical literal; `parse` of it yields `self` again.
    pub fn literal(&self) -> String {
        match self {
            AbiValue::Uint(v) => v.to_string(),
            AbiValue::Int(v) => {
                if v.bit(255) {
                    format!("-{}", v.wrapping_neg())
                } else {
                    v.to_string()
                }
            }
            AbiValue::Address(a) => a.to_string(),
            AbiValue::Bool(b) => b.to_string(),
            AbiValue::FixedBytes(b) | AbiValue::Bytes(b) => format!("0x{}", hex::encode(b)),
            AbiValue::String(s) => s.clone(),
            AbiValue::Array(items) => {
                let parts: Vec<String> = items.iter().map(AbiValue::literal).collect();
                format!("[{}]", parts.join(","))
            }
        }
    }

    /// Whether this value is a well-formed, in-range instance of `ty`.
    pub fn conforms(&self, ty: &AbiType) -> bool {
        match (self, ty) {
            (AbiValue::Uint(v), AbiType::Uint(n)) => coerce_int(*v, *n, false) == *v,
            (AbiValue::Int(v), AbiType::Int(n)) => coerce_int(*v, *n, true) == *v,
            (AbiValue::Address(_), AbiType::Address) | (AbiValue::Bool(_), AbiType::Bool) => true,
            (AbiValue::FixedBytes(b), AbiType::FixedBytes(n)) => b.len() == *n as usize,
            (AbiValue::Bytes(_), AbiType::Bytes) | (AbiValue::String(_), AbiType::String) => true,
            (AbiValue::Array(items), AbiType::Array(elem)) => items.iter().all(|i| i.conforms(elem)),
            _ => false,
        }
    }

    /// The integer payload of integer-like values.
    pub fn as_word(&self) -> Option<U256> {
        match self {
            AbiValue::Uint(v) | AbiValue::Int(v) => Some(*v),
            AbiValue::Address(a) => Some(a.to_word()),
            AbiValue::Bool(b) => Some(U256::from(*b as u8)),
            _ => None,
        }
    }

    /// Zero value of a type.
    pub fn zero(ty: &AbiType) -> AbiValue {
        match ty {
            AbiType::Uint(_) => AbiValue::Uint(U256::ZERO),
            AbiType::Int(_) => AbiValue::Int(U256::ZERO),
            AbiType::Address => AbiValue::Address(Address::ZERO),
            AbiType::Bool => AbiValue::Bool(false),
            AbiType::FixedBytes(n) => AbiValue::FixedBytes(vec![0; *n as usize]),
            AbiType::Bytes => AbiValue::Bytes(Vec::new()),
            AbiType::String => AbiValue::String(String::new()),
            AbiType::Array(_) => AbiValue::Array(Vec::new()),
        }
    }

    /// Build a value of integer-like `ty` from a word, coercing into range.
    pub fn from_word(ty: &AbiType, v: U256) -> Option<AbiValue> {
        Some(match ty {
            AbiType::Uint(n) => AbiValue::Uint(coerce_int(v, *n, false)),
            AbiType::Int(n) => AbiValue::Int(coerce_int(v, *n, true)),
            AbiType::Address => AbiValue::Address(Address::from_word(v)),
            AbiType::Bool => AbiValue::Bool(!v.is_zero()),
            AbiType::FixedBytes(n) => {
                let bytes: [u8; 32] = v.to_be_bytes();
                AbiValue::FixedBytes(bytes[..*n as usize].to_vec())
            }
            _ => return None,
        })
    }
}
