//! Word, address and hashing primitives shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tiny_keccak::{Hasher, Keccak};

pub use ruint::aliases::U256;

/// Keccak-256 of `data`.
pub fn keccak256<B: AsRef<[u8]>>(data: B) -> [u8; 32] {
    let mut output = [0u8; 32];
    let mut hasher = Keccak::v256();
    hasher.update(data.as_ref());
    hasher.finalize(&mut output);
    output
}

/// A 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    /// Address whose every byte is `b`; handy for fixtures.
    pub const fn repeat_byte(b: u8) -> Address {
        Address([b; 20])
    }

    /// Low 160 bits of a word.
    pub fn from_word(word: U256) -> Address {
        let bytes: [u8; 32] = word.to_be_bytes();
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes[12..]);
        Address(out)
    }

    pub fn to_word(self) -> U256 {
        let mut bytes = [0u8; 32];
        bytes[12..].copy_from_slice(&self.0);
        U256::from_be_bytes(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseAddressError {
    #[error("address literal is not hex: {0}")]
    NotHex(String),
    #[error("address literal longer than 20 bytes: {0}")]
    TooLong(String),
}

impl FromStr for Address {
    type Err = ParseAddressError;

    /// Accepts `0x`-prefixed or bare hex; short literals are left-padded with zeros.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_start_matches("0x").trim_start_matches("0X");
        let padded = if digits.len() % 2 == 1 {
            format!("0{digits}")
        } else {
            digits.to_string()
        };
        let bytes = hex::decode(&padded).map_err(|_| ParseAddressError::NotHex(s.to_string()))?;
        if bytes.len() > 20 {
            return Err(ParseAddressError::TooLong(s.to_string()));
        }
        let mut out = [0u8; 20];
        out[20 - bytes.len()..].copy_from_slice(&bytes);
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a decimal or `0x`-hex word literal.
pub fn parse_word(s: &str) -> Option<U256> {
    let s = s.trim();
    if let Some(hex_digits) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        if hex_digits.is_empty() {
            return Some(U256::ZERO);
        }
        U256::from_str_radix(hex_digits, 16).ok()
    } else {
        U256::from_str_radix(s, 10).ok()
    }
}

/// Serde adapter storing a word as a `0x` hex string.
pub mod word_hex {
    use super::*;

    pub fn serialize<S: Serializer>(v: &U256, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<U256, D::Error> {
        let s = String::deserialize(d)?;
        parse_word(&s).ok_or_else(|| serde::de::Error::custom(format!("bad word literal {s}")))
    }
}

/// Serde adapter for `Option<U256>` as an optional hex string.
pub mod opt_word_hex {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<U256>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(w) => s.serialize_some(&format!("{w:#x}")),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<U256>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        match s {
            None => Ok(None),
            Some(s) => parse_word(&s)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad word literal {s}"))),
        }
    }
}

/// Serde adapter for maps keyed by address with word values.
pub mod addr_word_map {
    use std::collections::BTreeMap;

    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Address, U256>, s: S) -> Result<S::Ok, S::Error> {
        let view: BTreeMap<String, String> =
            m.iter().map(|(k, v)| (k.to_string(), format!("{v:#x}"))).collect();
        view.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Address, U256>, D::Error> {
        let view: BTreeMap<String, String> = BTreeMap::deserialize(d)?;
        view.into_iter()
            .map(|(k, v)| {
                let a = k.parse().map_err(serde::de::Error::custom)?;
                let w = parse_word(&v)
                    .ok_or_else(|| serde::de::Error::custom(format!("bad word literal {v}")))?;
                Ok((a, w))
            })
            .collect()
    }
}

/// One ether in wei.
pub fn ether(n: u64) -> U256 {
    U256::from(n) * U256::from(1_000_000_000_000_000_000u64)
}
