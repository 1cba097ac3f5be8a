use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::opcode;

/// Runtime bytecode with its precomputed jump-destination set.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bytecode {
    code: Vec<u8>,
    jumpdests: BTreeSet<usize>,
}

impl Bytecode {
    pub fn new(code: Vec<u8>) -> Self {
        let jumpdests = scan_jumpdests(&code);
        Self { code, jumpdests }
    }

    pub fn from_hex(text: &str) -> Result<Self, hex::FromHexError> {
        let cleaned: String = text.split_whitespace().collect();
        let digits = cleaned.trim_start_matches("0x");
        Ok(Self::new(hex::decode(digits)?))
    }

    pub fn bytes(&self) -> &[u8] {
        &self.code
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    pub fn jumpdests(&self) -> &BTreeSet<usize> {
        &self.jumpdests
    }

    pub fn is_jumpdest(&self, pc: usize) -> bool {
        self.jumpdests.contains(&pc)
    }

    /// Opcode at `pc`, `STOP` past the end.
    pub fn op_at(&self, pc: usize) -> u8 {
        self.code.get(pc).copied().unwrap_or(opcode::STOP)
    }

    /// Iterate `(pc, opcode)` over instruction starts, skipping PUSH immediates.
    pub fn instructions(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        let mut pc = 0usize;
        std::iter::from_fn(move || {
            if pc >= self.code.len() {
                return None;
            }
            let op = self.code[pc];
            let at = pc;
            pc += 1 + opcode::immediate_len(op);
            Some((at, op))
        })
    }

    /// Static scan: whether the code contains any instruction that can send value
    /// (CALL or SELFDESTRUCT).
    pub fn can_send_value(&self) -> bool {
        self.instructions()
            .any(|(_, op)| op == opcode::CALL || op == opcode::SELFDESTRUCT)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.code)
    }
}

fn scan_jumpdests(code: &[u8]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut pc = 0usize;
    while pc < code.len() {
        let op = code[pc];
        if op == opcode::JUMPDEST {
            out.insert(pc);
        }
        pc += 1 + opcode::immediate_len(op);
    }
    out
}

impl std::fmt::Debug for Bytecode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Bytecode(0x{})", hex::encode(&self.code))
    }
}

impl Serialize for Bytecode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Bytecode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Bytecode::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jumpdest_inside_push_is_not_a_target() {
        // PUSH2 0x5b5b; JUMPDEST
        let code = Bytecode::new(vec![0x61, 0x5b, 0x5b, 0x5b]);
        assert_eq!(code.jumpdests().iter().copied().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn truncated_push_at_end() {
        let code = Bytecode::new(vec![0x5b, 0x7f, 0x5b]);
        assert!(code.is_jumpdest(0));
        assert!(!code.is_jumpdest(2));
    }

    proptest! {
        // Brute force: a position is a jumpdest iff it holds 0x5b and no PUSH
        // before it covers it with its immediate.
        #[test]
        fn jumpdests_match_brute_force(code in proptest::collection::vec(any::<u8>(), 0..200)) {
            let bc = Bytecode::new(code.clone());
            let mut starts = Vec::new();
            let mut pc = 0usize;
            while pc < code.len() {
                starts.push(pc);
                pc += 1 + opcode::immediate_len(code[pc]);
            }
            for pos in 0..code.len() {
                let covered = starts.iter().any(|&start| {
                    opcode::is_push(code[start])
                        && start < pos
                        && pos <= start + opcode::immediate_len(code[start])
                });
                let expect = code[pos] == 0x5b && !covered;
                prop_assert_eq!(bc.is_jumpdest(pos), expect);
            }
        }
    }
}
