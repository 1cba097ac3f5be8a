//! Contract ABI parsing, call encoding and validation of proposed calls.

mod codec;
mod types;

use serde_json::Value;

pub use codec::{decode_args, encode_args};
pub use types::{coerce_int, low_bits, AbiType, AbiValue, LiteralError, TypeParseError};

use crate::primitives::keccak256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbiError {
    #[error("malformed ABI: {0}")]
    MalformedAbi(String),
    #[error("expected {expected} arguments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("expected {expected}, got `{got}`")]
    TypeMismatch { expected: String, got: String },
    #[error("`{value}` out of range for {ty}")]
    ValueOutOfRange { ty: String, value: String },
    #[error("calldata too short")]
    Truncated,
    #[error("non-canonical encoding for {ty}")]
    Dirty { ty: String },
    #[error("selector does not match {0}")]
    SelectorMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mutability {
    View,
    NonPayable,
    Payable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionDescriptor {
    pub name: String,
    pub selector: [u8; 4],
    pub inputs: Vec<AbiType>,
    pub payable: bool,
    pub mutability: Mutability,
}

impl FunctionDescriptor {
    pub fn new(name: &str, inputs: Vec<AbiType>, mutability: Mutability) -> Self {
        let sig = signature_of(name, &inputs);
        let h = keccak256(sig.as_bytes());
        Self {
            name: name.to_string(),
            selector: [h[0], h[1], h[2], h[3]],
            inputs,
            payable: mutability == Mutability::Payable,
            mutability,
        }
    }

    /// Parse `name(type,...)` with the given mutability.
    pub fn from_signature(sig: &str, mutability: Mutability) -> Result<Self, AbiError> {
        let bad = || AbiError::MalformedAbi(format!("bad signature `{sig}`"));
        let open = sig.find('(').ok_or_else(bad)?;
        let inner = sig[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let inputs = if inner.is_empty() {
            Vec::new()
        } else {
            inner
                .split(',')
                .map(|t| t.trim().parse().map_err(|e: TypeParseError| AbiError::MalformedAbi(e.to_string())))
                .collect::<Result<_, _>>()?
        };
        Ok(Self::new(&sig[..open], inputs, mutability))
    }

    /// Canonical signature, e.g. `transfer(address,uint256)`.
    pub fn signature(&self) -> String {
        signature_of(&self.name, &self.inputs)
    }

    pub fn is_view(&self) -> bool {
        self.mutability == Mutability::View
    }
}

fn signature_of(name: &str, inputs: &[AbiType]) -> String {
    let parts: Vec<String> = inputs.iter().map(ToString::to_string).collect();
    format!("{name}({})", parts.join(","))
}

fn field<'a>(entry: &'a Value, key: &str, i: usize) -> Result<&'a Value, AbiError> {
    entry
        .get(key)
        .ok_or_else(|| AbiError::MalformedAbi(format!("entry {i}: missing `{key}`")))
}

/// One descriptor per `function` entry; events, constructors and fallbacks are skipped.
pub fn parse_abi(json_text: &str) -> Result<Vec<FunctionDescriptor>, AbiError> {
    let doc: Value = serde_json::from_str(json_text).map_err(|e| AbiError::MalformedAbi(e.to_string()))?;
    let entries = doc
        .as_array()
        .ok_or_else(|| AbiError::MalformedAbi("top level is not an array".into()))?;
    let mut out = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let kind = entry.get("type").and_then(Value::as_str).unwrap_or("function");
        if kind != "function" {
            continue;
        }
        let name = field(entry, "name", i)?
            .as_str()
            .ok_or_else(|| AbiError::MalformedAbi(format!("entry {i}: name is not a string")))?;
        let inputs = field(entry, "inputs", i)?
            .as_array()
            .ok_or_else(|| AbiError::MalformedAbi(format!("entry {i}: inputs is not an array")))?
            .iter()
            .map(|p| {
                let t = p
                    .get("type")
                    .and_then(Value::as_str)
                    .ok_or_else(|| AbiError::MalformedAbi(format!("entry {i}: input without type")))?;
                t.parse::<AbiType>().map_err(|e| AbiError::MalformedAbi(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mutability = match entry.get("stateMutability").and_then(Value::as_str) {
            Some("payable") => Mutability::Payable,
            Some("view") | Some("pure") => Mutability::View,
            Some("nonpayable") => Mutability::NonPayable,
            Some(other) => return Err(AbiError::MalformedAbi(format!("entry {i}: mutability `{other}`"))),
            None => {
                if entry.get("payable").and_then(Value::as_bool) == Some(true) {
                    Mutability::Payable
                } else if entry.get("constant").and_then(Value::as_bool) == Some(true) {
                    Mutability::View
                } else {
                    Mutability::NonPayable
                }
            }
        };
        out.push(FunctionDescriptor::new(name, inputs, mutability));
    }
    Ok(out)
}

/// Selector followed by the encoded arguments.
pub fn encode_call(fd: &FunctionDescriptor, args: &[AbiValue]) -> Result<Vec<u8>, AbiError> {
    let mut out = fd.selector.to_vec();
    out.extend(encode_args(&fd.inputs, args)?);
    Ok(out)
}

pub fn decode_call(fd: &FunctionDescriptor, calldata: &[u8]) -> Result<Vec<AbiValue>, AbiError> {
    if calldata.len() < 4 {
        return Err(AbiError::Truncated);
    }
    if calldata[..4] != fd.selector {
        return Err(AbiError::SelectorMismatch(fd.signature()));
    }
    decode_args(&fd.inputs, &calldata[4..])
}

/// A call as proposed by a generator: a function name and argument literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCall {
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedCall {
    pub function: FunctionDescriptor,
    pub args: Vec<AbiValue>,
}

impl ValidatedCall {
    pub fn calldata(&self) -> Vec<u8> {
        encode_call(&self.function, &self.args).expect("validated arguments encode")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Defect {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("expected {expected} arguments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("argument {index}: {source}")]
    BadLiteral { index: usize, source: LiteralError },
}

/// Resolve `raw` against the ABI, coercing literals into range. Among
/// overloads the first one with matching arity wins.
pub fn validate_call(fds: &[FunctionDescriptor], raw: &RawCall) -> Result<ValidatedCall, Vec<Defect>> {
    let candidates: Vec<&FunctionDescriptor> = fds.iter().filter(|f| f.name == raw.name).collect();
    let Some(first) = candidates.first() else {
        return Err(vec![Defect::UnknownFunction(raw.name.clone())]);
    };
    let Some(fd) = candidates.iter().find(|f| f.inputs.len() == raw.args.len()) else {
        return Err(vec![Defect::ArityMismatch {
            expected: first.inputs.len(),
            got: raw.args.len(),
        }]);
    };
    let mut args = Vec::with_capacity(raw.args.len());
    let mut defects = Vec::new();
    for (index, (ty, lit)) in fd.inputs.iter().zip(&raw.args).enumerate() {
        match AbiValue::parse(ty, lit) {
            Ok(v) => args.push(v),
            Err(source) => defects.push(Defect::BadLiteral { index, source }),
        }
    }
    if defects.is_empty() {
        Ok(ValidatedCall {
            function: (*fd).clone(),
            args,
        })
    } else {
        Err(defects)
    }
}
