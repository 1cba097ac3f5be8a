use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Bytecode;
use crate::primitives::{addr_word_map, opt_word_hex, word_hex, Address, U256};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Account {
    #[serde(with = "word_hex")]
    pub balance: U256,
    pub code: Arc<Bytecode>,
    /// Zero-valued slots are never stored, so equality is semantic.
    pub storage: BTreeMap<U256, U256>,
}

impl Account {
    pub fn with_balance(balance: U256) -> Self {
        Self {
            balance,
            ..Default::default()
        }
    }

    pub fn with_code(code: Bytecode, balance: U256) -> Self {
        Self {
            balance,
            code: Arc::new(code),
            storage: BTreeMap::new(),
        }
    }
}

/// Accounts keyed by address. Absent accounts read as empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorldState {
    pub accounts: BTreeMap<Address, Account>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, address: Address, account: Account) {
        self.accounts.insert(address, account);
    }

    pub fn account(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub fn balance(&self, address: &Address) -> U256 {
        self.accounts.get(address).map(|a| a.balance).unwrap_or(U256::ZERO)
    }

    pub fn set_balance(&mut self, address: Address, balance: U256) {
        self.accounts.entry(address).or_default().balance = balance;
    }

    pub fn code(&self, address: &Address) -> Option<&Arc<Bytecode>> {
        self.accounts
            .get(address)
            .map(|a| &a.code)
            .filter(|c| !c.is_empty())
    }

    pub fn has_code(&self, address: &Address) -> bool {
        self.code(address).is_some()
    }

    pub fn sload(&self, address: &Address, slot: U256) -> U256 {
        self.accounts
            .get(address)
            .and_then(|a| a.storage.get(&slot).copied())
            .unwrap_or(U256::ZERO)
    }

    pub fn sstore(&mut self, address: Address, slot: U256, value: U256) {
        let account = self.accounts.entry(address).or_default();
        if value.is_zero() {
            account.storage.remove(&slot);
        } else {
            account.storage.insert(slot, value);
        }
    }

    /// Move `amount` from `from` to `to`. Returns false (and changes nothing)
    /// when `from` cannot cover it.
    pub fn transfer(&mut self, from: Address, to: Address, amount: U256) -> bool {
        if amount.is_zero() {
            return true;
        }
        let have = self.balance(&from);
        if have < amount {
            return false;
        }
        if from == to {
            return true;
        }
        self.set_balance(from, have - amount);
        let dest = self.balance(&to);
        self.set_balance(to, dest.saturating_add(amount));
        true
    }
}

/// Block and call context for one transaction. Every override is optional;
/// an absent override means the default model behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Environment {
    pub timestamp: u64,
    pub block_number: u64,
    pub gas_limit: u64,
    pub caller: Address,
    #[serde(with = "word_hex")]
    pub call_value: U256,
    #[serde(default, with = "addr_word_map")]
    pub balance_overrides: BTreeMap<Address, U256>,
    #[serde(default, with = "opt_word_hex")]
    pub call_return_override: Option<U256>,
    #[serde(default)]
    pub return_data_size_override: Option<u64>,
    #[serde(default)]
    pub ext_code_size_override: BTreeMap<Address, u64>,
}

pub const DEFAULT_TIMESTAMP: u64 = 1_700_000_000;
pub const DEFAULT_BLOCK_NUMBER: u64 = 18_000_000;
pub const DEFAULT_GAS_LIMIT: u64 = 100_000;
/// Upper end of the gas-limit mutation palette.
pub const MAX_GAS_LIMIT: u64 = 1_000_000;

impl Default for Environment {
    fn default() -> Self {
        Self {
            timestamp: DEFAULT_TIMESTAMP,
            block_number: DEFAULT_BLOCK_NUMBER,
            gas_limit: DEFAULT_GAS_LIMIT,
            caller: Address::ZERO,
            call_value: U256::ZERO,
            balance_overrides: BTreeMap::new(),
            call_return_override: None,
            return_data_size_override: None,
            ext_code_size_override: BTreeMap::new(),
        }
    }
}

impl Environment {
    pub fn with_caller(caller: Address) -> Self {
        Self {
            caller,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_storage_reads_zero() {
        let s = WorldState::new();
        assert_eq!(s.sload(&Address::repeat_byte(1), U256::from(7)), U256::ZERO);
    }

    #[test]
    fn zero_store_is_canonical() {
        let a = Address::repeat_byte(1);
        let mut s = WorldState::new();
        s.insert(a, Account::default());
        let before = s.clone();
        s.sstore(a, U256::from(1), U256::from(5));
        s.sstore(a, U256::from(1), U256::ZERO);
        assert_eq!(s, before);
    }

    #[test]
    fn transfer_refuses_overdraft() {
        let (a, b) = (Address::repeat_byte(1), Address::repeat_byte(2));
        let mut s = WorldState::new();
        s.set_balance(a, U256::from(3));
        assert!(!s.transfer(a, b, U256::from(4)));
        assert!(s.transfer(a, b, U256::from(3)));
        assert_eq!(s.balance(&b), U256::from(3));
        assert_eq!(s.balance(&a), U256::ZERO);
    }
}
