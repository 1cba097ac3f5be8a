//! Head/tail argument encoding.

use super::{AbiError, AbiType, AbiValue};
use crate::primitives::{Address, U256};

fn word(v: U256) -> [u8; 32] {
    v.to_be_bytes()
}

fn padded(data: &[u8]) -> Vec<u8> {
    let mut out = data.to_vec();
    out.resize(data.len().div_ceil(32) * 32, 0);
    out
}

fn encode_static(ty: &AbiType, v: &AbiValue, out: &mut Vec<u8>) -> Result<(), AbiError> {
    if !v.conforms(ty) {
        return Err(if same_kind(ty, v) {
            AbiError::ValueOutOfRange {
                ty: ty.to_string(),
                value: v.literal(),
            }
        } else {
            AbiError::TypeMismatch {
                expected: ty.to_string(),
                got: v.literal(),
            }
        });
    }
    match v {
        AbiValue::FixedBytes(b) => {
            let mut w = [0u8; 32];
            w[..b.len()].copy_from_slice(b);
            out.extend_from_slice(&w);
        }
        other => out.extend_from_slice(&word(other.as_word().expect("static word"))),
    }
    Ok(())
}

fn same_kind(ty: &AbiType, v: &AbiValue) -> bool {
    matches!(
        (ty, v),
        (AbiType::Uint(_), AbiValue::Uint(_))
            | (AbiType::Int(_), AbiValue::Int(_))
            | (AbiType::FixedBytes(_), AbiValue::FixedBytes(_))
            | (AbiType::Array(_), AbiValue::Array(_))
    )
}

fn encode_tail(ty: &AbiType, v: &AbiValue) -> Result<Vec<u8>, AbiError> {
    let mut out = Vec::new();
    match (ty, v) {
        (AbiType::Bytes, AbiValue::Bytes(b)) => {
            out.extend_from_slice(&word(U256::from(b.len())));
            out.extend_from_slice(&padded(b));
        }
        (AbiType::String, AbiValue::String(s)) => {
            out.extend_from_slice(&word(U256::from(s.len())));
            out.extend_from_slice(&padded(s.as_bytes()));
        }
        (AbiType::Array(elem), AbiValue::Array(items)) => {
            out.extend_from_slice(&word(U256::from(items.len())));
            for item in items {
                encode_static(elem, item, &mut out)?;
            }
        }
        _ => {
            return Err(AbiError::TypeMismatch {
                expected: ty.to_string(),
                got: v.literal(),
            })
        }
    }
    Ok(out)
}

/// Encode argument values (without selector).
pub fn encode_args(types: &[AbiType], values: &[AbiValue]) -> Result<Vec<u8>, AbiError> {
    if types.len() != values.len() {
        return Err(AbiError::ArityMismatch {
            expected: types.len(),
            got: values.len(),
        });
    }
    let head_len = 32 * types.len();
    let mut head = Vec::with_capacity(head_len);
    let mut tail = Vec::new();
    for (ty, v) in types.iter().zip(values) {
        if ty.is_dynamic() {
            head.extend_from_slice(&word(U256::from(head_len + tail.len())));
            tail.extend(encode_tail(ty, v)?);
        } else {
            encode_static(ty, v, &mut head)?;
        }
    }
    head.extend(tail);
    Ok(head)
}

struct Reader<'a> {
    data: &'a [u8],
}

impl Reader<'_> {
    fn word(&self, at: usize) -> Result<U256, AbiError> {
        let end = at.checked_add(32).ok_or(AbiError::Truncated)?;
        let bytes = self.data.get(at..end).ok_or(AbiError::Truncated)?;
        Ok(U256::from_be_slice(bytes))
    }

    fn usize_at(&self, at: usize) -> Result<usize, AbiError> {
        let v = self.word(at)?;
        if v > U256::from(self.data.len()) {
            return Err(AbiError::Truncated);
        }
        Ok(v.to::<usize>())
    }

    fn bytes(&self, at: usize, len: usize) -> Result<&[u8], AbiError> {
        let end = at.checked_add(len).ok_or(AbiError::Truncated)?;
        self.data.get(at..end).ok_or(AbiError::Truncated)
    }
}

fn decode_static(ty: &AbiType, r: &Reader<'_>, at: usize) -> Result<AbiValue, AbiError> {
    let w = r.word(at)?;
    let dirty = || AbiError::Dirty { ty: ty.to_string() };
    let v = match ty {
        AbiType::Uint(_) => AbiValue::Uint(w),
        AbiType::Int(_) => AbiValue::Int(w),
        AbiType::Address => {
            if w >> 160 != U256::ZERO {
                return Err(dirty());
            }
            AbiValue::Address(Address::from_word(w))
        }
        AbiType::Bool => {
            if w > U256::from(1u8) {
                return Err(dirty());
            }
            AbiValue::Bool(w == U256::from(1u8))
        }
        AbiType::FixedBytes(n) => {
            let bytes: [u8; 32] = w.to_be_bytes();
            if bytes[*n as usize..].iter().any(|&b| b != 0) {
                return Err(dirty());
            }
            AbiValue::FixedBytes(bytes[..*n as usize].to_vec())
        }
        _ => unreachable!("dynamic type in static position"),
    };
    if !v.conforms(ty) {
        return Err(dirty());
    }
    Ok(v)
}

/// Decode argument values (calldata without selector).
pub fn decode_args(types: &[AbiType], data: &[u8]) -> Result<Vec<AbiValue>, AbiError> {
    let r = Reader { data };
    let mut out = Vec::with_capacity(types.len());
    for (i, ty) in types.iter().enumerate() {
        let at = 32 * i;
        if !ty.is_dynamic() {
            out.push(decode_static(ty, &r, at)?);
            continue;
        }
        let offset = r.usize_at(at)?;
        let len = r.usize_at(offset)?;
        let body = offset + 32;
        out.push(match ty {
            AbiType::Bytes => AbiValue::Bytes(r.bytes(body, len)?.to_vec()),
            AbiType::String => AbiValue::String(
                String::from_utf8(r.bytes(body, len)?.to_vec()).map_err(|_| AbiError::Dirty { ty: ty.to_string() })?,
            ),
            AbiType::Array(elem) => {
                let mut items = Vec::with_capacity(len);
                for k in 0..len {
                    items.push(decode_static(elem, &r, body + 32 * k)?);
                }
                AbiValue::Array(items)
            }
            _ => unreachable!(),
        });
    }
    Ok(out)
}
