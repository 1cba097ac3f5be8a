use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abi::{FunctionDescriptor, Mutability, RawCall};
use crate::corpus::{boundary_values_among, payable_values};
use crate::primitives::{ether, keccak256, Address, U256};

use super::backend::{LlmBackend, LlmError};
use super::hint::HintKind;
use super::prompt::{
    parse_mutability, parse_sequences, render_sequences, sections, template_summary, RawLine, RawSequence,
    TASK_REFINE, TASK_SEQUENCES, TASK_SUMMARIZE,
};

/// Offline generator. Output depends only on the prompt text and `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubBackend {
    pub seed: u64,
}

struct Account {
    address: Address,
    attacker: bool,
}

struct Context {
    functions: Vec<FunctionDescriptor>,
    accounts: Vec<Account>,
    addresses: Vec<Address>,
}

fn parse_context(s: &std::collections::BTreeMap<String, Vec<String>>) -> Context {
    let functions = s
        .get("FUNCTIONS")
        .into_iter()
        .flatten()
        .filter_map(|l| {
            let l = l.trim().strip_prefix("- ")?;
            let head = l.split(':').next()?;
            let (sig, m) = head.rsplit_once(' ')?;
            FunctionDescriptor::from_signature(sig.trim(), parse_mutability(m.trim())?).ok()
        })
        .collect();
    let accounts: Vec<Account> = s
        .get("ACCOUNTS")
        .into_iter()
        .flatten()
        .filter_map(|l| {
            let mut parts = l.trim().strip_prefix("- ")?.split_whitespace().skip(1);
            let address = parts.next()?.parse().ok()?;
            Some(Account {
                address,
                attacker: parts.next() == Some("attacker"),
            })
        })
        .collect();
    let mut addresses: Vec<Address> = accounts.iter().map(|a| a.address).collect();
    if let Some(c) = s.get("CONTRACT").and_then(|v| v.first()).and_then(|c| c.parse().ok()) {
        addresses.push(c);
    }
    addresses.push(Address::ZERO);
    Context {
        functions,
        accounts,
        addresses,
    }
}

impl StubBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, prompt: &str) -> ChaCha8Rng {
        let h = keccak256(prompt.as_bytes());
        ChaCha8Rng::seed_from_u64(u64::from_be_bytes(h[..8].try_into().unwrap()) ^ self.seed)
    }

    fn args(&self, f: &FunctionDescriptor, ctx: &Context, hint: Option<HintKind>, rng: &mut ChaCha8Rng) -> Vec<String> {
        f.inputs
            .iter()
            .map(|t| {
                let mut pool = boundary_values_among(t, &ctx.addresses);
                if hint == Some(HintKind::ArithmeticBoundaries) && pool.len() > 2 {
                    pool.drain(..2);
                }
                pool.choose(rng).map(|v| v.literal()).unwrap_or_default()
            })
            .collect()
    }

    fn sender(&self, ctx: &Context, hint: Option<HintKind>, rng: &mut ChaCha8Rng) -> usize {
        let attackers: Vec<usize> = (0..ctx.accounts.len()).filter(|&i| ctx.accounts[i].attacker).collect();
        match hint {
            Some(HintKind::EscalatePrivilege | HintKind::ReenterViaFallback) if !attackers.is_empty() => {
                *attackers.choose(rng).unwrap()
            }
            _ => rng.random_range(0..ctx.accounts.len().max(1)),
        }
    }

    fn value(&self, f: &FunctionDescriptor, hint: Option<HintKind>, rng: &mut ChaCha8Rng) -> U256 {
        match (f.payable, hint) {
            (false, _) => U256::ZERO,
            (true, Some(HintKind::TransferEther)) => ether(1),
            (true, _) => *payable_values().choose(rng).unwrap(),
        }
    }

    fn sequences(&self, prompt: &str) -> String {
        let s = sections(prompt);
        let ctx = parse_context(&s);
        let count: usize = s.get("COUNT").and_then(|v| v.first()).and_then(|c| c.parse().ok()).unwrap_or(1);
        let hint = s.get("HINT").and_then(|v| v.first()).and_then(|h| HintKind::find_in(h));
        let mut pool: Vec<&FunctionDescriptor> = ctx.functions.iter().collect();
        let keep = |pred: &dyn Fn(&FunctionDescriptor) -> bool, pool: &mut Vec<&FunctionDescriptor>| {
            if pool.iter().any(|f| pred(f)) {
                pool.retain(|f| pred(f));
            }
        };
        match hint {
            Some(HintKind::ModifyState | HintKind::ReenterViaFallback | HintKind::ChainDependentCalls) => {
                keep(&|f| f.mutability != Mutability::View, &mut pool)
            }
            Some(HintKind::TransferEther) => keep(&|f| f.payable, &mut pool),
            _ => {}
        }
        if pool.is_empty() {
            return String::new();
        }
        let mut rng = self.rng(prompt);
        let mut out: Vec<RawSequence> = Vec::with_capacity(count);
        for i in 0..count {
            let len = match hint {
                Some(HintKind::ChainDependentCalls) => 4,
                _ => rng.random_range(1..=4),
            };
            let seq = (0..len)
                .map(|j| {
                    let slot = match hint {
                        Some(HintKind::ChainDependentCalls) => i + j / 2,
                        _ => i + j,
                    };
                    let f = pool[slot % pool.len()];
                    RawLine {
                        call: RawCall {
                            name: f.name.clone(),
                            args: self.args(f, &ctx, hint, &mut rng),
                        },
                        value: self.value(f, hint, &mut rng),
                        from: self.sender(&ctx, hint, &mut rng),
                    }
                })
                .collect();
            out.push(seq);
        }
        render_sequences(&out)
    }

    /// Each line gets fresh boundary arguments, a random sender and, for
    /// payable calls, the largest tried value.
    fn refine(&self, prompt: &str) -> String {
        let s = sections(prompt);
        let ctx = parse_context(&s);
        let body = s.get("SEQUENCES").map(|l| l.join("\n")).unwrap_or_default();
        let mut rng = self.rng(prompt);
        let out: Vec<RawSequence> = parse_sequences(&body)
            .into_iter()
            .map(|seq| {
                seq.into_iter()
                    .map(|mut line| {
                        if let Some(f) = ctx
                            .functions
                            .iter()
                            .find(|f| f.name == line.call.name && f.inputs.len() == line.call.args.len())
                        {
                            line.call.args = self.args(f, &ctx, Some(HintKind::ArithmeticBoundaries), &mut rng);
                            if f.payable {
                                line.value = ether(1);
                            }
                        }
                        line.from = self.sender(&ctx, None, &mut rng);
                        line
                    })
                    .collect()
            })
            .collect();
        render_sequences(&out)
    }
}

impl LlmBackend for StubBackend {
    fn complete(&self, prompt: &str, _max_tokens: u32, _temperature: f64) -> Result<String, LlmError> {
        let s = sections(prompt);
        let task = s.get("TASK").and_then(|t| t.first()).map(String::as_str);
        Ok(match task {
            Some(TASK_SUMMARIZE) => parse_context(&s)
                .functions
                .iter()
                .map(|f| format!("{}: {}\n", f.signature(), template_summary(f)))
                .collect(),
            Some(TASK_SEQUENCES) => self.sequences(prompt),
            Some(TASK_REFINE) => self.refine(prompt),
            _ => String::new(),
        })
    }

    fn is_stub(&self) -> bool {
        true
    }
}
