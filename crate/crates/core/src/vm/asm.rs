//! A small assembler for writing test and corpus contracts by hand.
//!
//! Source is a whitespace-separated token stream; `;` starts a comment.
//!
//! * `name:` defines a label and emits a JUMPDEST at that position.
//! * `push X` picks the narrowest PUSH for `X`; `push1`..`push32` force a width.
//! * `X` may be a decimal or `0x` hex literal, `@label` (always two bytes),
//!   or `$sig(types)` for a 4-byte function selector.
//! * Any other token is an opcode mnemonic, case-insensitive.
//!
//! ```
//! use seqfuzz::vm::asm::assemble;
//! let code = assemble("push 0x2a push 0 sstore stop").unwrap();
//! assert_eq!(code.bytes(), &[0x60, 0x2a, 0x60, 0x00, 0x55, 0x00]);
//! ```

use std::collections::BTreeMap;

use super::opcode::{self, JUMPDEST, PUSH1};
use super::Bytecode;
use crate::primitives::{keccak256, parse_word, U256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("`{0}` needs an immediate")]
    MissingImmediate(String),
    #[error("bad immediate `{0}`")]
    BadImmediate(String),
    #[error("immediate `{0}` does not fit")]
    TooWide(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("label `{0}` defined twice")]
    DuplicateLabel(String),
}

enum Item {
    Op(u8),
    Push { width: usize, value: U256 },
    LabelRef(String),
}

/// Selector of a canonical signature as a word.
pub fn selector_word(signature: &str) -> U256 {
    let h = keccak256(signature.as_bytes());
    U256::from_be_slice(&h[..4])
}

fn immediate(token: &str) -> Result<Imm, AsmError> {
    if let Some(label) = token.strip_prefix('@') {
        return Ok(Imm::Label(label.to_string()));
    }
    if let Some(sig) = token.strip_prefix('$') {
        return Ok(Imm::Value(selector_word(sig)));
    }
    parse_word(token)
        .map(Imm::Value)
        .ok_or_else(|| AsmError::BadImmediate(token.to_string()))
}

enum Imm {
    Value(U256),
    Label(String),
}

fn byte_width(v: U256) -> usize {
    v.byte_len().max(1)
}

pub fn assemble(source: &str) -> Result<Bytecode, AsmError> {
    let tokens: Vec<&str> = source
        .lines()
        .map(|l| l.split(';').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .collect();
    let mut items = Vec::new();
    let mut labels = BTreeMap::new();
    let mut offset = 0usize;
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        i += 1;
        if let Some(label) = tok.strip_suffix(':') {
            if labels.insert(label.to_string(), offset).is_some() {
                return Err(AsmError::DuplicateLabel(label.to_string()));
            }
            items.push(Item::Op(JUMPDEST));
            offset += 1;
            continue;
        }
        let lower = tok.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("push") {
            let forced = if rest.is_empty() {
                None
            } else {
                match rest.parse::<usize>() {
                    Ok(n) if (1..=32).contains(&n) => Some(n),
                    _ => return Err(AsmError::UnknownMnemonic(tok.to_string())),
                }
            };
            let arg = tokens
                .get(i)
                .ok_or_else(|| AsmError::MissingImmediate(tok.to_string()))?;
            i += 1;
            match immediate(arg)? {
                Imm::Label(name) => {
                    if forced.is_some_and(|w| w != 2) {
                        return Err(AsmError::TooWide(arg.to_string()));
                    }
                    items.push(Item::LabelRef(name));
                    offset += 3;
                }
                Imm::Value(value) => {
                    let width = forced.unwrap_or_else(|| byte_width(value));
                    if byte_width(value) > width {
                        return Err(AsmError::TooWide(arg.to_string()));
                    }
                    items.push(Item::Push { width, value });
                    offset += 1 + width;
                }
            }
            continue;
        }
        let op = opcode::from_name(tok).ok_or_else(|| AsmError::UnknownMnemonic(tok.to_string()))?;
        items.push(Item::Op(op));
        offset += 1;
    }

    let mut code = Vec::with_capacity(offset);
    for item in items {
        match item {
            Item::Op(op) => code.push(op),
            Item::Push { width, value } => {
                code.push(PUSH1 + (width as u8 - 1));
                let bytes: [u8; 32] = value.to_be_bytes();
                code.extend_from_slice(&bytes[32 - width..]);
            }
            Item::LabelRef(name) => {
                let at = *labels.get(&name).ok_or(AsmError::UndefinedLabel(name))?;
                code.push(PUSH1 + 1);
                code.extend_from_slice(&(at as u16).to_be_bytes());
            }
        }
    }
    Ok(Bytecode::new(code))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_resolve_to_jumpdests() {
        let code = assemble("push @end jump end: stop").unwrap();
        assert_eq!(code.bytes(), &[0x61, 0x00, 0x04, 0x56, 0x5b, 0x00]);
        assert!(code.is_jumpdest(4));
    }

    #[test]
    fn selectors_and_widths() {
        let code = assemble("push $transfer(address,uint256) push2 1").unwrap();
        assert_eq!(code.bytes(), &[0x63, 0xa9, 0x05, 0x9c, 0xbb, 0x61, 0x00, 0x01]);
    }

    #[test]
    fn errors() {
        assert_eq!(assemble("frob"), Err(AsmError::UnknownMnemonic("frob".into())));
        assert_eq!(assemble("push"), Err(AsmError::MissingImmediate("push".into())));
        assert_eq!(assemble("push1 0x100"), Err(AsmError::TooWide("0x100".into())));
        assert_eq!(assemble("push @x"), Err(AsmError::UndefinedLabel("x".into())));
        assert_eq!(assemble("a: a:"), Err(AsmError::DuplicateLabel("a".into())));
    }

    #[test]
    fn comments_are_ignored() {
        let code = assemble("push 1 ; trailing\n; whole line\n pop").unwrap();
        assert_eq!(code.bytes(), &[0x60, 0x01, 0x50]);
    }
}
