//! Mutation operators, the adaptive operator scheduler and RAW-aware crossover.

mod crossover;
mod operators;
mod scheduler;

use rand::Rng;

pub use crossover::{crossover_raw_aware, legal_cuts, splice, CrossoverPlan};
pub use operators::{
    applicable, apply, perturb, InapplicableOperator, MutationOperator, Perturbation, BLOCK_JUMP, MIN_GAS,
    TIMESTAMP_JUMP,
};
pub use scheduler::{OperatorScheduler, P_MAX, P_MIN};

use crate::corpus::{Bundle, Seed};

/// Resampling attempts for an operator set before giving up.
pub const MAX_RESAMPLES: usize = 5;

/// Mutate `seed` with an operator set from `scheduler`. When no drawn set
/// applies within the resample budget the result is an unchanged clone and
/// the returned set is empty.
pub fn mutate_child<R: Rng + ?Sized>(
    scheduler: &OperatorScheduler,
    seed: &Seed,
    bundle: &Bundle,
    rng: &mut R,
) -> (Seed, Vec<MutationOperator>) {
    'attempt: for _ in 0..MAX_RESAMPLES {
        let ops = scheduler.sample(rng);
        let mut child = seed.clone();
        for &op in &ops {
            match apply(op, &child, bundle, rng) {
                Ok(next) => child = next,
                Err(_) => continue 'attempt,
            }
        }
        return (child, ops);
    }
    (seed.clone(), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abi::{AbiType, AbiValue, FunctionDescriptor, Mutability};
    use crate::corpus::{Origin, Transaction};
    use crate::primitives::U256;
    use crate::vm::asm::assemble;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> Bundle {
        // Stores EXTCODESIZE of the calldata address.
        let code = assemble("push 4 calldataload extcodesize push 0 sstore stop").unwrap();
        let abi = r#"[
            {"type":"function","name":"f","inputs":[{"name":"a","type":"address"},{"name":"n","type":"int8"}],"stateMutability":"payable"},
            {"type":"function","name":"g","inputs":[],"stateMutability":"nonpayable"}
        ]"#;
        Bundle::simple("m", code, abi).unwrap()
    }

    fn f_tx(b: &Bundle) -> Transaction {
        let f = b.function("f(address,int8)").unwrap().clone();
        Transaction::new(f, vec![AbiValue::Address(b.sender(2)), AbiValue::Int(U256::from(5u8))], 1, U256::from(10u8))
    }

    fn g_tx(b: &Bundle) -> Transaction {
        Transaction::new(b.function("g()").unwrap().clone(), vec![], 0, U256::ZERO)
    }

    /// Field names that differ between two transactions.
    fn changed(a: &Transaction, b: &Transaction) -> Vec<&'static str> {
        let mut out = vec![];
        let checks: [(&str, bool); 10] = [
            ("args", a.args != b.args),
            ("sender", a.sender != b.sender),
            ("value", a.value != b.value),
            ("gas", a.env.gas_limit != b.env.gas_limit),
            ("timestamp", a.env.timestamp != b.env.timestamp),
            ("block", a.env.block_number != b.env.block_number),
            ("balance", a.env.balance_overrides != b.env.balance_overrides),
            ("callret", a.env.call_return_override != b.env.call_return_override),
            ("retsize", a.env.return_data_size_override != b.env.return_data_size_override),
            ("extcode", a.env.ext_code_size_override != b.env.ext_code_size_override),
        ];
        for (name, diff) in checks {
            if diff {
                out.push(name);
            }
        }
        if a.function != b.function {
            out.push("function");
        }
        out
    }

    #[test]
    fn timestamp_increment() {
        let b = bundle();
        let mut tx = g_tx(&b);
        tx.env.timestamp = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = perturb(MutationOperator::Timestamp, Perturbation::Increment, &tx, &b, &mut rng).unwrap();
        assert_eq!(out.env.timestamp, 1001);
        assert_eq!(changed(&tx, &out), ["timestamp"]);
    }

    #[test]
    fn arguments_on_nullary_call_is_inapplicable() {
        let b = bundle();
        let seed = Seed::new(vec![g_tx(&b)], Origin::Stub);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            apply(MutationOperator::Arguments, &seed, &b, &mut rng),
            Err(InapplicableOperator(MutationOperator::Arguments))
        );
    }

    #[test]
    fn each_operator_changes_one_field_of_one_tx() {
        let b = bundle();
        let seed = Seed::new(vec![f_tx(&b), g_tx(&b), f_tx(&b)], Origin::Stub);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let expect = ["args", "sender", "value", "gas", "timestamp", "block", "balance", "callret", "retsize", "extcode"];
        for (op, field) in MutationOperator::ALL.into_iter().zip(expect) {
            for _ in 0..30 {
                let out = apply(op, &seed, &b, &mut rng).unwrap();
                let diffs: Vec<_> = seed.txs.iter().zip(&out.txs).map(|(a, c)| changed(a, c)).collect();
                let touched: Vec<_> = diffs.iter().filter(|d| !d.is_empty()).collect();
                assert_eq!(touched.len(), 1, "{op}");
                assert_eq!(touched[0].as_slice(), [field], "{op}");
                for tx in &out.txs {
                    for (v, t) in tx.args.iter().zip(&tx.function.inputs) {
                        assert!(v.conforms(t));
                    }
                }
            }
        }
    }

    #[test]
    fn ext_code_size_override_reaches_the_vm() {
        let b = bundle();
        let target = b.sender(2);
        let mut tx = f_tx(&b);
        tx.value = U256::ZERO;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = loop {
            let out = perturb(MutationOperator::ExtCodeSize, Perturbation::One, &tx, &b, &mut rng).unwrap();
            if out.env.ext_code_size_override.contains_key(&target) {
                break out;
            }
        };
        assert_eq!(out.env.ext_code_size_override.len(), 1);
        let exec = b.execute(&[out]).unwrap();
        assert_eq!(exec.post.sload(&b.contract(), U256::ZERO), U256::from(1u8));
    }

    #[test]
    fn int_arguments_stay_in_range() {
        let b = bundle();
        let mut tx = f_tx(&b);
        tx.args[1] = AbiValue::Int(crate::abi::coerce_int(U256::from(127u8), 8, true));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in MutationOperator::Arguments.palette() {
            for _ in 0..20 {
                if let Some(out) = perturb(MutationOperator::Arguments, *p, &tx, &b, &mut rng) {
                    assert!(out.args[1].conforms(&AbiType::Int(8)));
                    assert!(matches!(out.args[0], AbiValue::Address(_)));
                }
            }
        }
    }

    #[test]
    fn mutate_child_falls_back_to_clone() {
        let code = assemble("stop").unwrap();
        let abi = r#"[{"type":"function","name":"g","inputs":[],"stateMutability":"nonpayable"}]"#;
        let mut roles = crate::corpus::Roles::default();
        roles.users.clear();
        roles.attackers.clear();
        let b = Bundle::new("solo", code, abi, roles, None, Default::default(), None).unwrap();
        let f = FunctionDescriptor::new("g", vec![], Mutability::NonPayable);
        let seed = Seed::new(vec![Transaction::new(f, vec![], 0, U256::ZERO)], Origin::Stub);
        let mut s = OperatorScheduler::new(0.0, 0.9);
        s.p = [0.0; 10];
        s.p[MutationOperator::Arguments.index()] = 0.5;
        s.p[MutationOperator::Account.index()] = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (child, ops) = mutate_child(&s, &seed, &b, &mut rng);
        assert!(ops.is_empty());
        assert_eq!(child, seed);
    }
}
