//! Transaction-sequence fuzzing for EVM contracts.
//!
//! The pieces, bottom up:
//!
//! * [`vm`] runs bytecode and records a full [`vm::ExecutionTrace`] per transaction.
//! * [`abi`] parses ABI JSON and encodes calls.
//! * [`llmgen`] proposes call sequences through a text backend (remote or offline stub).
//! * [`corpus`] holds seeds, pre-fuzz scoring, top-k selection and persistence.
//! * [`feedback`] tracks campaign coverage and read-after-write pairs.
//! * [`mutate`] holds the ten mutation operators, their scheduler and crossover.
//! * [`symexec`] flips branches concolically when coverage stalls.
//! * [`oracles`] turns traces into bug reports.
//! * [`campaign`] ties it all into the generational loop and the CLI.

pub mod abi;
pub mod campaign;
pub mod corpus;
pub mod feedback;
pub mod llmgen;
pub mod mutate;
pub mod oracles;
pub mod primitives;
pub mod symexec;
pub mod vm;

pub use primitives::{Address, U256};
