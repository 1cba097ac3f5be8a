//! The interpreted opcode subset.
//!
//! Anything not listed here is rejected with `VmError::UnknownOpcode`, which
//! marks a malformed bundle rather than a contract bug.

pub const STOP: u8 = 0x00;
pub const ADD: u8 = 0x01;
pub const MUL: u8 = 0x02;
pub const SUB: u8 = 0x03;
pub const DIV: u8 = 0x04;
pub const SDIV: u8 = 0x05;
pub const MOD: u8 = 0x06;
pub const EXP: u8 = 0x0a;
pub const LT: u8 = 0x10;
pub const GT: u8 = 0x11;
pub const SLT: u8 = 0x12;
pub const SGT: u8 = 0x13;
pub const EQ: u8 = 0x14;
pub const ISZERO: u8 = 0x15;
pub const AND: u8 = 0x16;
pub const OR: u8 = 0x17;
pub const XOR: u8 = 0x18;
pub const NOT: u8 = 0x19;
pub const BYTE: u8 = 0x1a;
pub const SHL: u8 = 0x1b;
pub const SHR: u8 = 0x1c;
pub const KECCAK256: u8 = 0x20;
pub const ADDRESS: u8 = 0x30;
pub const BALANCE: u8 = 0x31;
pub const ORIGIN: u8 = 0x32;
pub const CALLER: u8 = 0x33;
pub const CALLVALUE: u8 = 0x34;
pub const CALLDATALOAD: u8 = 0x35;
pub const CALLDATASIZE: u8 = 0x36;
pub const CALLDATACOPY: u8 = 0x37;
pub const EXTCODESIZE: u8 = 0x3b;
pub const RETURNDATASIZE: u8 = 0x3d;
pub const RETURNDATACOPY: u8 = 0x3e;
pub const TIMESTAMP: u8 = 0x42;
pub const NUMBER: u8 = 0x43;
pub const GASLIMIT: u8 = 0x45;
pub const POP: u8 = 0x50;
pub const MLOAD: u8 = 0x51;
pub const MSTORE: u8 = 0x52;
pub const MSTORE8: u8 = 0x53;
pub const SLOAD: u8 = 0x54;
pub const SSTORE: u8 = 0x55;
pub const JUMP: u8 = 0x56;
pub const JUMPI: u8 = 0x57;
pub const PC: u8 = 0x58;
pub const GAS: u8 = 0x5a;
pub const JUMPDEST: u8 = 0x5b;
pub const PUSH1: u8 = 0x60;
pub const PUSH32: u8 = 0x7f;
pub const DUP1: u8 = 0x80;
pub const DUP16: u8 = 0x8f;
pub const SWAP1: u8 = 0x90;
pub const SWAP16: u8 = 0x9f;
pub const LOG0: u8 = 0xa0;
pub const LOG4: u8 = 0xa4;
pub const CALL: u8 = 0xf1;
pub const RETURN: u8 = 0xf3;
pub const DELEGATECALL: u8 = 0xf4;
pub const STATICCALL: u8 = 0xfa;
pub const REVERT: u8 = 0xfd;
pub const INVALID: u8 = 0xfe;
pub const SELFDESTRUCT: u8 = 0xff;

/// Number of immediate bytes following `op` (non-zero only for PUSHn).
pub const fn immediate_len(op: u8) -> usize {
    if op >= PUSH1 && op <= PUSH32 {
        (op - PUSH1 + 1) as usize
    } else {
        0
    }
}

pub const fn is_push(op: u8) -> bool {
    op >= PUSH1 && op <= PUSH32
}

/// Whether `op` belongs to the interpreted subset.
pub fn is_supported(op: u8) -> bool {
    matches!(
        op,
        STOP | ADD
            | MUL
            | SUB
            | DIV
            | SDIV
            | MOD
            | EXP
            | LT
            | GT
            | SLT
            | SGT
            | EQ
            | ISZERO
            | AND
            | OR
            | XOR
            | NOT
            | BYTE
            | SHL
            | SHR
            | KECCAK256
            | ADDRESS
            | BALANCE
            | ORIGIN
            | CALLER
            | CALLVALUE
            | CALLDATALOAD
            | CALLDATASIZE
            | CALLDATACOPY
            | EXTCODESIZE
            | RETURNDATASIZE
            | RETURNDATACOPY
            | TIMESTAMP
            | NUMBER
            | GASLIMIT
            | POP
            | MLOAD
            | MSTORE
            | MSTORE8
            | SLOAD
            | SSTORE
            | JUMP
            | JUMPI
            | PC
            | GAS
            | JUMPDEST
            | CALL
            | RETURN
            | DELEGATECALL
            | STATICCALL
            | REVERT
            | INVALID
            | SELFDESTRUCT
    ) || (PUSH1..=PUSH32).contains(&op)
        || (DUP1..=DUP16).contains(&op)
        || (SWAP1..=SWAP16).contains(&op)
        || (LOG0..=LOG4).contains(&op)
}

/// Gas charged before executing `op`.
pub fn gas_cost(op: u8) -> u64 {
    match op {
        SLOAD => 20,
        SSTORE => 100,
        CALL | DELEGATECALL | STATICCALL => 100,
        _ => 1,
    }
}

/// Mnemonic for trace summaries.
pub fn name(op: u8) -> String {
    let fixed = match op {
        STOP => "STOP",
        ADD => "ADD",
        MUL => "MUL",
        SUB => "SUB",
        DIV => "DIV",
        SDIV => "SDIV",
        MOD => "MOD",
        EXP => "EXP",
        LT => "LT",
        GT => "GT",
        SLT => "SLT",
        SGT => "SGT",
        EQ => "EQ",
        ISZERO => "ISZERO",
        AND => "AND",
        OR => "OR",
        XOR => "XOR",
        NOT => "NOT",
        BYTE => "BYTE",
        SHL => "SHL",
        SHR => "SHR",
        KECCAK256 => "KECCAK256",
        ADDRESS => "ADDRESS",
        BALANCE => "BALANCE",
        ORIGIN => "ORIGIN",
        CALLER => "CALLER",
        CALLVALUE => "CALLVALUE",
        CALLDATALOAD => "CALLDATALOAD",
        CALLDATASIZE => "CALLDATASIZE",
        CALLDATACOPY => "CALLDATACOPY",
        EXTCODESIZE => "EXTCODESIZE",
        RETURNDATASIZE => "RETURNDATASIZE",
        RETURNDATACOPY => "RETURNDATACOPY",
        TIMESTAMP => "TIMESTAMP",
        NUMBER => "NUMBER",
        GASLIMIT => "GASLIMIT",
        POP => "POP",
        MLOAD => "MLOAD",
        MSTORE => "MSTORE",
        MSTORE8 => "MSTORE8",
        SLOAD => "SLOAD",
        SSTORE => "SSTORE",
        JUMP => "JUMP",
        JUMPI => "JUMPI",
        PC => "PC",
        GAS => "GAS",
        JUMPDEST => "JUMPDEST",
        CALL => "CALL",
        RETURN => "RETURN",
        DELEGATECALL => "DELEGATECALL",
        STATICCALL => "STATICCALL",
        REVERT => "REVERT",
        INVALID => "INVALID",
        SELFDESTRUCT => "SELFDESTRUCT",
        _ => "",
    };
    if !fixed.is_empty() {
        return fixed.to_string();
    }
    match op {
        PUSH1..=PUSH32 => format!("PUSH{}", op - PUSH1 + 1),
        DUP1..=DUP16 => format!("DUP{}", op - DUP1 + 1),
        SWAP1..=SWAP16 => format!("SWAP{}", op - SWAP1 + 1),
        LOG0..=LOG4 => format!("LOG{}", op - LOG0),
        _ => format!("UNKNOWN(0x{op:02x})"),
    }
}

/// Reverse of [`name`], used by the assembler.
pub fn from_name(mnemonic: &str) -> Option<u8> {
    let upper = mnemonic.to_ascii_uppercase();
    (0u8..=255).find(|&op| is_supported(op) && name(op) == upper)
}
