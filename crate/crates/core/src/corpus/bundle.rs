//! Contract bundles: bytecode, ABI, account roles and optional fixtures.
//!
//! Directory layout:
//!
//! ```text
//! <name>/code.bin             hex runtime bytecode
//! <name>/abi.json             contract ABI
//! <name>/roles.json           optional: owner, users, attackers, balance
//! <name>/attacker.json        optional: scripted counterparty
//! <name>/genesis.json         optional: contract balance and storage
//! <name>/expected_bugs.json   optional: list of bug class names
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Seed, Transaction};
use crate::abi::{self, AbiType, AbiValue, FunctionDescriptor, Mutability};
use crate::oracles::BugClass;
use crate::primitives::{ether, word_hex, Address, U256};
use crate::vm::{
    Account, AttackerScript, Bytecode, Environment, ExecutionTrace, ScriptedCall, TxInput, Vm, VmError, WorldState,
};

pub const DEFAULT_CONTRACT: Address = Address::repeat_byte(0xcc);
pub const DEFAULT_OWNER: Address = Address::repeat_byte(0x11);
pub const DEFAULT_USER: Address = Address::repeat_byte(0x22);
pub const DEFAULT_ATTACKER: Address = Address::repeat_byte(0x33);

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Owner,
    User,
    Attacker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSpec {
    pub address: Address,
    #[serde(with = "word_hex")]
    pub balance: U256,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub owner: Address,
    #[serde(default)]
    pub users: Vec<Address>,
    #[serde(default)]
    pub attackers: Vec<Address>,
    #[serde(default = "default_balance", with = "word_hex")]
    pub balance: U256,
    #[serde(default = "default_contract")]
    pub contract: Address,
}

fn default_balance() -> U256 {
    ether(100)
}

fn default_contract() -> Address {
    DEFAULT_CONTRACT
}

impl Default for Roles {
    fn default() -> Self {
        Self {
            owner: DEFAULT_OWNER,
            users: vec![DEFAULT_USER],
            attackers: vec![DEFAULT_ATTACKER],
            balance: default_balance(),
            contract: DEFAULT_CONTRACT,
        }
    }
}

/// A scripted call in file form: the function is named by signature and
/// encoded against the bundle ABI at load time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCallSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Address>,
    pub function: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default, with = "word_hex")]
    pub value: U256,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerSpec {
    pub address: Address,
    #[serde(default = "one")]
    pub max_reentries: u32,
    pub calls: Vec<ScriptedCallSpec>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Genesis {
    #[serde(default, with = "word_hex")]
    pub balance: U256,
    #[serde(default)]
    pub storage: BTreeMap<String, String>,
}

/// A loaded contract under test.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub name: String,
    pub code: Bytecode,
    pub abi: Vec<FunctionDescriptor>,
    pub abi_json: String,
    pub roles: Roles,
    pub attacker: Option<AttackerSpec>,
    pub genesis: Genesis,
    pub expected_bugs: Option<Vec<BugClass>>,
    accounts: Vec<AccountSpec>,
    vm: Vm,
    initial: WorldState,
}

fn invalid(path: &Path, msg: impl ToString) -> BundleError {
    BundleError::Invalid {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn read(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, BundleError> {
    if !path.exists() {
        return Ok(None);
    }
    serde_json::from_str(&read(path)?).map(Some).map_err(|e| invalid(path, e))
}

fn encode_signature_call(abi: &[FunctionDescriptor], sig: &str, args: &[String]) -> Result<Vec<u8>, String> {
    let fd = match abi.iter().find(|f| f.signature() == sig) {
        Some(f) => f.clone(),
        None => FunctionDescriptor::from_signature(sig, Mutability::NonPayable).map_err(|e| e.to_string())?,
    };
    let values = fd
        .inputs
        .iter()
        .zip(args)
        .map(|(t, a)| AbiValue::parse(t, a).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    abi::encode_call(&fd, &values).map_err(|e| e.to_string())
}

impl Bundle {
    /// Assemble a bundle in memory.
    pub fn new(
        name: &str,
        code: Bytecode,
        abi_json: &str,
        roles: Roles,
        attacker: Option<AttackerSpec>,
        genesis: Genesis,
        expected_bugs: Option<Vec<BugClass>>,
    ) -> Result<Self, String> {
        let abi = abi::parse_abi(abi_json).map_err(|e| e.to_string())?;
        let mut accounts = vec![AccountSpec {
            address: roles.owner,
            balance: roles.balance,
            role: Role::Owner,
        }];
        accounts.extend(roles.users.iter().map(|&a| AccountSpec {
            address: a,
            balance: roles.balance,
            role: Role::User,
        }));
        accounts.extend(roles.attackers.iter().map(|&a| AccountSpec {
            address: a,
            balance: roles.balance,
            role: Role::Attacker,
        }));

        let mut vm = Vm::new();
        if let Some(spec) = &attacker {
            let calls = spec
                .calls
                .iter()
                .map(|c| {
                    Ok(ScriptedCall {
                        target: c.target,
                        calldata: encode_signature_call(&abi, &c.function, &c.args)?,
                        value: c.value,
                        gas: None,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?;
            vm = vm.with_script(
                spec.address,
                AttackerScript {
                    calls,
                    max_reentries: spec.max_reentries,
                },
            );
        }

        let mut initial = WorldState::new();
        let mut contract = Account::with_code(code.clone(), genesis.balance);
        for (k, v) in &genesis.storage {
            let key = crate::primitives::parse_word(k).ok_or_else(|| format!("bad genesis slot {k}"))?;
            let val = crate::primitives::parse_word(v).ok_or_else(|| format!("bad genesis value {v}"))?;
            if !val.is_zero() {
                contract.storage.insert(key, val);
            }
        }
        initial.insert(roles.contract, contract);
        for a in &accounts {
            initial.insert(a.address, Account::with_balance(a.balance));
        }

        Ok(Self {
            name: name.to_string(),
            code,
            abi,
            abi_json: abi_json.to_string(),
            roles,
            attacker,
            genesis,
            expected_bugs,
            accounts,
            vm,
            initial,
        })
    }

    /// Same contract and fixtures with a different account list. Exactly one
    /// account must be the owner; accounts are reordered owner, users,
    /// attackers.
    pub fn with_accounts(&self, accounts: &[AccountSpec]) -> Result<Self, String> {
        let of = |r: Role| accounts.iter().filter(move |a| a.role == r);
        let owners: Vec<&AccountSpec> = of(Role::Owner).collect();
        let [owner] = owners[..] else {
            return Err(format!("expected exactly one owner account, got {}", owners.len()));
        };
        let roles = Roles {
            owner: owner.address,
            users: of(Role::User).map(|a| a.address).collect(),
            attackers: of(Role::Attacker).map(|a| a.address).collect(),
            balance: owner.balance,
            contract: self.roles.contract,
        };
        let mut b = Self::new(
            &self.name,
            self.code.clone(),
            &self.abi_json,
            roles,
            self.attacker.clone(),
            self.genesis.clone(),
            self.expected_bugs.clone(),
        )?;
        b.accounts = [Role::Owner, Role::User, Role::Attacker]
            .into_iter()
            .flat_map(|r| of(r).cloned())
            .collect();
        for a in &b.accounts {
            b.initial.insert(a.address, Account::with_balance(a.balance));
        }
        Ok(b)
    }

    /// Minimal bundle with default roles and no fixtures.
    pub fn simple(name: &str, code: Bytecode, abi_json: &str) -> Result<Self, String> {
        Self::new(name, code, abi_json, Roles::default(), None, Genesis::default(), None)
    }

    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bundle".into());
        let code_path = dir.join("code.bin");
        let code = Bytecode::from_hex(read(&code_path)?.trim()).map_err(|e| invalid(&code_path, e))?;
        let abi_path = dir.join("abi.json");
        let abi_json = read(&abi_path)?;
        let roles = read_optional::<Roles>(&dir.join("roles.json"))?.unwrap_or_default();
        let attacker = read_optional::<AttackerSpec>(&dir.join("attacker.json"))?;
        let genesis = read_optional::<Genesis>(&dir.join("genesis.json"))?.unwrap_or_default();
        let bugs_path = dir.join("expected_bugs.json");
        let expected_bugs = read_optional::<Vec<String>>(&bugs_path)?
            .map(|names| {
                names
                    .iter()
                    .map(|n| n.parse::<BugClass>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid(&bugs_path, e))
            })
            .transpose()?;
        Self::new(&name, code, &abi_json, roles, attacker, genesis, expected_bugs).map_err(|e| invalid(dir, e))
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("code.bin"), format!("{}\n", self.code.to_hex()))?;
        fs::write(dir.join("abi.json"), &self.abi_json)?;
        let pretty = |v: &dyn erased::Json| v.pretty();
        fs::write(dir.join("roles.json"), pretty(&self.roles))?;
        if let Some(a) = &self.attacker {
            fs::write(dir.join("attacker.json"), pretty(a))?;
        }
        if self.genesis != Genesis::default() {
            fs::write(dir.join("genesis.json"), pretty(&self.genesis))?;
        }
        if let Some(bugs) = &self.expected_bugs {
            let names: Vec<String> = bugs.iter().map(ToString::to_string).collect();
            fs::write(dir.join("expected_bugs.json"), pretty(&names))?;
        }
        Ok(())
    }

    pub fn contract(&self) -> Address {
        self.roles.contract
    }

    pub fn owner(&self) -> Address {
        self.roles.owner
    }

    /// Sender accounts; transaction `sender` fields index this list.
    pub fn accounts(&self) -> &[AccountSpec] {
        &self.accounts
    }

    pub fn sender(&self, index: usize) -> Address {
        self.accounts[index % self.accounts.len()].address
    }

    pub fn role_of(&self, address: &Address) -> Option<Role> {
        self.accounts.iter().find(|a| a.address == *address).map(|a| a.role)
    }

    pub fn is_attacker(&self, address: &Address) -> bool {
        self.role_of(address) == Some(Role::Attacker)
    }

    pub fn vm(&self) -> &Vm {
        &self.vm
    }

    pub fn initial_state(&self) -> &WorldState {
        &self.initial
    }

    pub fn function(&self, signature: &str) -> Option<&FunctionDescriptor> {
        self.abi.iter().find(|f| f.signature() == signature)
    }

    /// Addresses worth trying for `address` arguments.
    pub fn interesting_addresses(&self) -> Vec<Address> {
        let mut out: Vec<Address> = self.accounts.iter().map(|a| a.address).collect();
        out.push(self.contract());
        out.push(Address::ZERO);
        out
    }

    pub fn tx_input(&self, tx: &Transaction) -> TxInput {
        let calldata = abi::encode_call(&tx.function, &tx.args).unwrap_or_else(|_| tx.function.selector.to_vec());
        let e = &tx.env;
        TxInput {
            to: self.contract(),
            calldata,
            env: Environment {
                timestamp: e.timestamp,
                block_number: e.block_number,
                gas_limit: e.gas_limit,
                caller: self.sender(tx.sender),
                call_value: tx.value,
                balance_overrides: e.balance_overrides.clone(),
                call_return_override: e.call_return_override,
                return_data_size_override: e.return_data_size_override,
                ext_code_size_override: e.ext_code_size_override.clone(),
            },
        }
    }

    /// Run `txs` from the bundle's initial state.
    pub fn execute(&self, txs: &[Transaction]) -> Result<Execution, VmError> {
        self.execute_from(self.initial_state(), txs)
    }

    pub fn execute_from(&self, pre: &WorldState, txs: &[Transaction]) -> Result<Execution, VmError> {
        let inputs: Vec<TxInput> = txs.iter().map(|t| self.tx_input(t)).collect();
        let (traces, post) = self.vm.execute_sequence(pre, &inputs)?;
        Ok(Execution {
            traces,
            pre: pre.clone(),
            post,
        })
    }

    pub fn execute_seed(&self, seed: &Seed) -> Result<Execution, VmError> {
        self.execute(&seed.txs)
    }

    /// Whether some ABI entry has this many inputs of integer-like type.
    pub fn has_arguments(&self) -> bool {
        self.abi.iter().any(|f| !f.inputs.is_empty())
    }

    pub fn input_types(&self) -> impl Iterator<Item = &AbiType> {
        self.abi.iter().flat_map(|f| f.inputs.iter())
    }
}

/// Traces and states of one sequence run.
#[derive(Debug, Clone)]
pub struct Execution {
    pub traces: Vec<ExecutionTrace>,
    pub pre: WorldState,
    pub post: WorldState,
}

mod erased {
    pub trait Json {
        fn pretty(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn pretty(&self) -> String {
            serde_json::to_string_pretty(self).expect("serializable") + "\n"
        }
    }
}
