//! Seed generation through layered prompting of a text model, with a
//! deterministic offline stub and behaviour-driven prompt hints.
//!
//! The layers: per-function summaries, sequence inference, format
//! verification against the ABI, one edge-case refinement round, and an
//! optional behavioural hint appended to the sequence prompt.

mod backend;
mod hint;
mod prompt;
mod stub;

use std::collections::HashSet;

pub use backend::{
    complete_with_retry, LlmBackend, LlmError, RemoteBackend, DEFAULT_TIMEOUT, ENDPOINT_VAR, TOKEN_VAR,
};
pub use hint::{HintInjector, HintKind, HintTrigger, PromptHint, RARE_CALL_RATIO, SHALLOW_DEPTH};
pub use prompt::{
    parse_line, parse_sequences, parse_summaries, refine_prompt, render_sequences, sequences_prompt,
    summarize_prompt, template_summary, FunctionSummary, PromptBundle, RawLine, RawSequence,
};
pub use stub::StubBackend;

use crate::abi::validate_call;
use crate::corpus::{Bundle, Origin, Seed, Transaction};
use prompt::mutability_word;

pub const MAX_TOKENS: u32 = 2048;
pub const SUMMARY_TEMPERATURE: f64 = 0.2;
pub const SEQUENCE_TEMPERATURE: f64 = 0.8;
/// Extra stub rounds used to fill a short quota.
const FILL_ROUNDS: u64 = 4;

/// Layer 1: one summary per ABI function. Functions the model skipped get
/// the template summary.
pub fn abstract_functions(bundle: &Bundle, backend: &dyn LlmBackend) -> Result<Vec<FunctionSummary>, LlmError> {
    let text = complete_with_retry(backend, &summarize_prompt(bundle), MAX_TOKENS, SUMMARY_TEMPERATURE)?;
    let parsed = parse_summaries(&text);
    Ok(bundle
        .abi
        .iter()
        .map(|f| FunctionSummary {
            signature: f.signature(),
            mutability: mutability_word(f.mutability).to_string(),
            summary: parsed.get(&f.signature()).cloned().unwrap_or_else(|| template_summary(f)),
        })
        .collect())
}

/// Layer 2 with the optional layer-5 hint.
pub fn infer_sequences(
    bundle: &Bundle,
    summaries: &[FunctionSummary],
    backend: &dyn LlmBackend,
    hint: Option<&PromptHint>,
    count: usize,
    round: u64,
) -> Result<Vec<RawSequence>, LlmError> {
    if summaries.is_empty() {
        return Err(LlmError::UnparseableOutput);
    }
    let prompt = sequences_prompt(bundle, summaries, hint, count, round);
    let seqs = parse_sequences(&complete_with_retry(backend, &prompt, MAX_TOKENS, SEQUENCE_TEMPERATURE)?);
    if seqs.is_empty() {
        return Err(LlmError::UnparseableOutput);
    }
    Ok(seqs)
}

/// Layer 4: one edge-case rewrite round over surviving sequences.
pub fn refine_sequences(
    bundle: &Bundle,
    summaries: &[FunctionSummary],
    backend: &dyn LlmBackend,
    sequences: &[RawSequence],
) -> Result<Vec<RawSequence>, LlmError> {
    let prompt = refine_prompt(bundle, summaries, sequences);
    Ok(parse_sequences(&complete_with_retry(backend, &prompt, MAX_TOKENS, SEQUENCE_TEMPERATURE)?))
}

/// Layer 3: resolve each line against the ABI and the account list. Bad
/// lines are dropped; value sent to a non-payable function is zeroed.
pub fn verify_sequence(bundle: &Bundle, seq: &RawSequence, max_len: usize) -> Vec<Transaction> {
    seq.iter()
        .filter(|l| l.from < bundle.accounts().len())
        .filter_map(|l| {
            let call = validate_call(&bundle.abi, &l.call).ok()?;
            let value = if call.function.payable { l.value } else { Default::default() };
            Some(Transaction::new(call.function, call.args, l.from, value))
        })
        .take(max_len.max(1))
        .collect()
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub count: usize,
    pub max_len: usize,
    pub hint: Option<&'a PromptHint>,
    /// Distinguishes repeated requests so a deterministic backend varies its output.
    pub round: u64,
}

/// A backend plus the stub used when it fails or falls short.
pub struct SeedGenerator {
    backend: Box<dyn LlmBackend>,
    fallback: Option<StubBackend>,
}

impl SeedGenerator {
    pub fn stub(seed: u64) -> Self {
        Self {
            backend: Box::new(StubBackend::new(seed)),
            fallback: Some(StubBackend::new(seed)),
        }
    }

    pub fn with_fallback(backend: Box<dyn LlmBackend>, seed: u64) -> Self {
        Self {
            backend,
            fallback: Some(StubBackend::new(seed)),
        }
    }

    /// No stub fallback: backend failures surface as errors.
    pub fn without_fallback(backend: Box<dyn LlmBackend>) -> Self {
        Self { backend, fallback: None }
    }

    /// Remote backend when the endpoint variable is set, else the stub.
    pub fn from_env(seed: u64) -> Self {
        match RemoteBackend::from_env() {
            Some(remote) => Self::with_fallback(Box::new(remote), seed),
            None => Self::stub(seed),
        }
    }

    pub fn uses_stub(&self) -> bool {
        self.backend.is_stub()
    }

    /// Run `layer` on the backend, then on the stub when the backend fails.
    fn layered<T>(
        &self,
        layer: impl Fn(&dyn LlmBackend) -> Result<T, LlmError>,
    ) -> Result<(T, Origin), LlmError> {
        let origin = if self.backend.is_stub() { Origin::Stub } else { Origin::Llm };
        match layer(self.backend.as_ref()) {
            Ok(v) => Ok((v, origin)),
            Err(e) => match &self.fallback {
                Some(stub) if !self.backend.is_stub() => {
                    log::warn!("model backend failed, using stub: {e}");
                    layer(stub).map(|v| (v, Origin::Stub))
                }
                _ => Err(e),
            },
        }
    }

    /// Seeds that passed format verification, at most `req.count`, plus the
    /// intermediate prompt products.
    pub fn generate(&self, bundle: &Bundle, req: &GenerationRequest<'_>) -> Result<(PromptBundle, Vec<Seed>), LlmError> {
        let mut out = PromptBundle {
            hint: req.hint.cloned(),
            ..Default::default()
        };
        if req.count == 0 {
            return Ok((out, vec![]));
        }
        let (summaries, _) = self.layered(|b| abstract_functions(bundle, b))?;
        out.abstraction = summaries.clone();
        let first = req.count.div_ceil(2);
        let mut seeds = vec![];
        let mut seen = HashSet::new();
        let mut push = |txs: Vec<Transaction>, origin, seeds: &mut Vec<Seed>| {
            if !txs.is_empty() {
                let seed = Seed::new(txs, origin);
                if seen.insert(seed.id) {
                    seeds.push(seed);
                }
            }
        };
        match self.layered(|b| infer_sequences(bundle, &summaries, b, req.hint, first, req.round)) {
            Ok((seqs, origin)) => {
                let kept: Vec<RawSequence> = seqs
                    .into_iter()
                    .filter(|s| !verify_sequence(bundle, s, req.max_len).is_empty())
                    .collect();
                for s in &kept {
                    push(verify_sequence(bundle, s, req.max_len), origin, &mut seeds);
                }
                if !kept.is_empty() {
                    if let Ok((refined, origin)) = self.layered(|b| refine_sequences(bundle, &summaries, b, &kept)) {
                        for s in &refined {
                            push(verify_sequence(bundle, s, req.max_len), origin, &mut seeds);
                        }
                        out.sequences.extend(refined);
                    }
                }
                out.sequences.splice(0..0, kept);
            }
            Err(LlmError::UnparseableOutput) if self.fallback.is_some() => {}
            Err(e) => return Err(e),
        }
        if let Some(stub) = &self.fallback {
            for extra in 0..FILL_ROUNDS {
                if seeds.len() >= req.count {
                    break;
                }
                let missing = req.count - seeds.len();
                let round = req.round.wrapping_mul(FILL_ROUNDS + 1).wrapping_add(extra + 1);
                let Ok(seqs) = infer_sequences(bundle, &summaries, stub, req.hint, missing, round) else {
                    break;
                };
                for s in &seqs {
                    push(verify_sequence(bundle, s, req.max_len), Origin::Stub, &mut seeds);
                }
            }
        }
        if seeds.is_empty() && !bundle.abi.is_empty() {
            return Err(LlmError::UnparseableOutput);
        }
        seeds.truncate(req.count);
        Ok((out, seeds))
    }

    pub fn generate_seeds(&self, bundle: &Bundle, count: usize, hint: Option<&PromptHint>) -> Result<Vec<Seed>, LlmError> {
        let req = GenerationRequest {
            count,
            max_len: 8,
            hint,
            round: 0,
        };
        self.generate(bundle, &req).map(|(_, s)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abi::{encode_call, Mutability};
    use crate::vm::asm::assemble;

    fn bundle(abi: &str) -> Bundle {
        Bundle::simple("t", assemble("stop").unwrap(), abi).unwrap()
    }

    const TWO: &str = r#"[
        {"type":"function","name":"deposit","inputs":[],"stateMutability":"payable"},
        {"type":"function","name":"balanceOf","inputs":[{"name":"a","type":"address"}],"stateMutability":"view"}
    ]"#;

    struct Fixed(String);

    impl LlmBackend for Fixed {
        fn complete(&self, _: &str, _: u32, _: f64) -> Result<String, LlmError> {
            Ok(self.0.clone())
        }
    }

    struct Down;

    impl LlmBackend for Down {
        fn complete(&self, _: &str, _: u32, _: f64) -> Result<String, LlmError> {
            Err(LlmError::BackendUnavailable("down".into()))
        }
    }

    #[test]
    fn stub_summaries() {
        let b = bundle(TWO);
        let s = abstract_functions(&b, &StubBackend::new(0)).unwrap();
        assert_eq!(s[0].summary, "payable state-modifying function deposit()");
        assert!(s[1].summary.starts_with("read-only"));
    }

    #[test]
    fn stub_sequences_rotate_start_function() {
        let b = bundle(TWO);
        let stub = StubBackend::new(0);
        let s = abstract_functions(&b, &stub).unwrap();
        let seqs = infer_sequences(&b, &s, &stub, None, 4, 0).unwrap();
        assert_eq!(seqs.len(), 4);
        let firsts: Vec<&str> = seqs.iter().map(|q| q[0].call.name.as_str()).collect();
        assert_eq!(firsts, ["deposit", "balanceOf", "deposit", "balanceOf"]);
        for q in &seqs {
            assert!((1..=4).contains(&q.len()));
            for w in q.windows(2) {
                assert_ne!(w[0].call.name, w[1].call.name);
            }
        }
    }

    #[test]
    fn modify_state_hint_avoids_views() {
        let b = bundle(TWO);
        let stub = StubBackend::new(3);
        let s = abstract_functions(&b, &stub).unwrap();
        let hint = PromptHint {
            kind: HintKind::ModifyState,
            text: HintKind::ModifyState.text().into(),
            trigger: HintTrigger::NoStateWrite,
        };
        for q in infer_sequences(&b, &s, &stub, Some(&hint), 10, 0).unwrap() {
            assert!(q.iter().any(|l| l.call.name == "deposit"));
        }
    }

    #[test]
    fn empty_abi_unparseable() {
        let b = bundle("[]");
        let stub = StubBackend::new(0);
        let s = abstract_functions(&b, &stub).unwrap();
        assert_eq!(infer_sequences(&b, &s, &stub, None, 4, 0), Err(LlmError::UnparseableOutput));
    }

    #[test]
    fn generated_seeds_encode() {
        let b = bundle(TWO);
        let seeds = SeedGenerator::stub(1).generate_seeds(&b, 8, None).unwrap();
        assert_eq!(seeds.len(), 8);
        for s in &seeds {
            assert_eq!(s.origin, Origin::Stub);
            for tx in &s.txs {
                encode_call(&tx.function, &tx.args).unwrap();
                assert!(b.abi.contains(&tx.function));
            }
        }
        assert!(SeedGenerator::stub(1).generate_seeds(&b, 0, None).unwrap().is_empty());
    }

    #[test]
    fn stub_is_deterministic() {
        let b = bundle(TWO);
        let a = SeedGenerator::stub(9).generate_seeds(&b, 6, None).unwrap();
        assert_eq!(a, SeedGenerator::stub(9).generate_seeds(&b, 6, None).unwrap());
    }

    #[test]
    fn garbage_lines_dropped_rest_kept() {
        let b = bundle(TWO);
        let backend = Fixed("deposit() value=5 from=1\nnot a call\nbalanceOf(0x22) from=0\nmint(3)\n".into());
        let g = SeedGenerator::with_fallback(Box::new(backend), 0);
        let seeds = g.generate_seeds(&b, 3, None).unwrap();
        assert_eq!(seeds.len(), 3);
        assert_eq!(seeds[0].origin, Origin::Llm);
        assert_eq!(seeds[0].txs.len(), 2);
        assert_eq!(seeds[0].txs[0].value, crate::U256::from(5u8));
    }

    #[test]
    fn all_garbage_filled_by_stub() {
        let b = bundle(TWO);
        let g = SeedGenerator::with_fallback(Box::new(Fixed("??".into())), 0);
        let seeds = g.generate_seeds(&b, 5, None).unwrap();
        assert_eq!(seeds.len(), 5);
        assert!(seeds.iter().all(|s| s.origin == Origin::Stub));
    }

    #[test]
    fn backend_down() {
        let b = bundle(TWO);
        let seeds = SeedGenerator::with_fallback(Box::new(Down), 0).generate_seeds(&b, 4, None).unwrap();
        assert_eq!(seeds.len(), 4);
        let err = SeedGenerator::without_fallback(Box::new(Down)).generate_seeds(&b, 4, None).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable(_)));
    }

    #[test]
    fn verification_rules() {
        let b = bundle(TWO);
        let seq = parse_sequences("deposit(1) value=1\nbalanceOf(0x22) value=7 from=0\ndeposit() from=99\n").remove(0);
        let txs = verify_sequence(&b, &seq, 8);
        assert_eq!(txs.len(), 1);
        assert_eq!(txs[0].function.mutability, Mutability::View);
        assert!(txs[0].value.is_zero());
    }
}
