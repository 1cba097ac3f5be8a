//! 256-bit word semantics for the pure stack operations.
//!
//! Operand order follows the stack: `a` is the top (first popped), `b` the
//! next. The concolic evaluator calls into the same functions.

use super::opcode::*;
use crate::primitives::U256;

fn is_negative(x: U256) -> bool {
    x.bit(255)
}

fn abs(x: U256) -> U256 {
    if is_negative(x) {
        x.wrapping_neg()
    } else {
        x
    }
}

fn bool_word(b: bool) -> U256 {
    if b {
        U256::from(1u8)
    } else {
        U256::ZERO
    }
}

pub fn signed_lt(a: U256, b: U256) -> bool {
    match (is_negative(a), is_negative(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

fn sdiv(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let q = abs(a) / abs(b);
    if is_negative(a) != is_negative(b) {
        q.wrapping_neg()
    } else {
        q
    }
}

/// Byte `i` of `x` counting from the most significant byte.
fn byte_at(i: U256, x: U256) -> U256 {
    if i >= U256::from(32u8) {
        return U256::ZERO;
    }
    let idx = i.to::<usize>();
    let bytes: [u8; 32] = x.to_be_bytes();
    U256::from(bytes[idx])
}

fn shift_amount(s: U256) -> Option<usize> {
    if s >= U256::from(256u16) {
        None
    } else {
        Some(s.to::<usize>())
    }
}

/// Evaluate a two-operand opcode. Panics on opcodes outside that group.
pub fn binary(op: u8, a: U256, b: U256) -> U256 {
    match op {
        ADD => a.wrapping_add(b),
        MUL => a.wrapping_mul(b),
        SUB => a.wrapping_sub(b),
        DIV => {
            if b.is_zero() {
                U256::ZERO
            } else {
                a / b
            }
        }
        SDIV => sdiv(a, b),
        MOD => {
            if b.is_zero() {
                U256::ZERO
            } else {
                a % b
            }
        }
        EXP => a.wrapping_pow(b),
        LT => bool_word(a < b),
        GT => bool_word(a > b),
        SLT => bool_word(signed_lt(a, b)),
        SGT => bool_word(signed_lt(b, a)),
        EQ => bool_word(a == b),
        AND => a & b,
        OR => a | b,
        XOR => a ^ b,
        BYTE => byte_at(a, b),
        SHL => shift_amount(a).map(|s| b << s).unwrap_or(U256::ZERO),
        SHR => shift_amount(a).map(|s| b >> s).unwrap_or(U256::ZERO),
        _ => panic!("not a binary opcode: {op:#04x}"),
    }
}

/// Evaluate a one-operand opcode (ISZERO, NOT).
pub fn unary(op: u8, a: U256) -> U256 {
    match op {
        ISZERO => bool_word(a.is_zero()),
        NOT => !a,
        _ => panic!("not a unary opcode: {op:#04x}"),
    }
}

pub fn is_binary(op: u8) -> bool {
    matches!(
        op,
        ADD | MUL | SUB | DIV | SDIV | MOD | EXP | LT | GT | SLT | SGT | EQ | AND | OR | XOR | BYTE | SHL | SHR
    )
}

/// Whether the mathematically exact result of `op(a, b)` differs from the
/// 256-bit wrapped result (ADD, SUB, MUL only).
pub fn wraps(op: u8, a: U256, b: U256) -> bool {
    match op {
        ADD => a.overflowing_add(b).1,
        SUB => a.overflowing_sub(b).1,
        MUL => a.overflowing_mul(b).1,
        _ => false,
    }
}

/// `Some(k)` when `m == 2^k - 1` for `0 < k < 256`.
pub fn low_mask_width(m: U256) -> Option<usize> {
    if m.is_zero() || m == U256::MAX {
        return None;
    }
    let ones = m.trailing_ones();
    (ones == m.bit_len()).then_some(ones)
}
