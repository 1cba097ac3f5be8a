use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The ten detectable bug classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugClass {
    /// Assertion failure after persisted effects.
    AF,
    /// Block-data dependency deciding a transfer.
    BD,
    /// Integer overflow reaching state or value.
    IO,
    /// Ether leaking to an untrusted account.
    LE,
    /// Ether frozen: receivable but never sendable.
    FE,
    /// Reentrancy.
    RE,
    /// Transaction-order dependency.
    TD,
    /// Unhandled exception of an external call.
    UE,
    /// Unprotected self-destruct.
    US,
    /// Unsafe delegatecall target.
    UD,
}

impl BugClass {
    pub const ALL: [BugClass; 10] = [
        BugClass::AF,
        BugClass::BD,
        BugClass::IO,
        BugClass::LE,
        BugClass::FE,
        BugClass::RE,
        BugClass::TD,
        BugClass::UE,
        BugClass::US,
        BugClass::UD,
    ];
}

impl fmt::Display for BugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for BugClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BugClass::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown bug class `{s}`"))
    }
}
