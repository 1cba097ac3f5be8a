use serde::{Deserialize, Serialize};

use crate::vm::BehaviorMetrics;

/// Mean call depth below this counts as shallow.
pub const SHALLOW_DEPTH: f64 = 2.0;
/// External-call ratio below this counts as near zero.
pub const RARE_CALL_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintTrigger {
    NoStateWrite,
    ShallowDepth,
    RareExternalCalls,
}

impl HintTrigger {
    /// Checked in this order; the first that fires chooses the hint.
    pub const ALL: [HintTrigger; 3] = [HintTrigger::NoStateWrite, HintTrigger::ShallowDepth, HintTrigger::RareExternalCalls];

    pub fn fires(self, m: &BehaviorMetrics) -> bool {
        match self {
            HintTrigger::NoStateWrite => m.s == 0,
            HintTrigger::ShallowDepth => m.d < SHALLOW_DEPTH,
            HintTrigger::RareExternalCalls => m.r < RARE_CALL_RATIO,
        }
    }

    pub fn pool(self) -> &'static [HintKind] {
        match self {
            HintTrigger::NoStateWrite => &[HintKind::ModifyState],
            HintTrigger::ShallowDepth => &[HintKind::ReenterViaFallback, HintKind::ChainDependentCalls],
            HintTrigger::RareExternalCalls => &[
                HintKind::TransferEther,
                HintKind::EscalatePrivilege,
                HintKind::ArithmeticBoundaries,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintKind {
    ModifyState,
    TransferEther,
    ReenterViaFallback,
    EscalatePrivilege,
    ArithmeticBoundaries,
    ChainDependentCalls,
}

impl HintKind {
    pub const ALL: [HintKind; 6] = [
        HintKind::ModifyState,
        HintKind::TransferEther,
        HintKind::ReenterViaFallback,
        HintKind::EscalatePrivilege,
        HintKind::ArithmeticBoundaries,
        HintKind::ChainDependentCalls,
    ];

    pub fn text(self) -> &'static str {
        match self {
            HintKind::ModifyState => "Generate a transaction that modifies contract state",
            HintKind::TransferEther => "Generate a transaction that sends Ether to or from the contract",
            HintKind::ReenterViaFallback => {
                "Generate calls that make the contract call back into an external account"
            }
            HintKind::EscalatePrivilege => "Call privileged functions from a non-owner account",
            HintKind::ArithmeticBoundaries => "Use arithmetic boundary values such as type maxima",
            HintKind::ChainDependentCalls => "Chain calls so later transactions read state written by earlier ones",
        }
    }

    /// The pool entry whose text occurs in `prompt`.
    pub fn find_in(prompt: &str) -> Option<HintKind> {
        HintKind::ALL.into_iter().find(|k| prompt.contains(k.text()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptHint {
    pub kind: HintKind,
    pub text: String,
    pub trigger: HintTrigger,
}

/// Round-robin hint selection per trigger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintInjector {
    cursor: [usize; 3],
}

impl HintInjector {
    pub fn new() -> Self {
        Self::default()
    }

    /// A hint when the sequence behaved shallowly, else `None`.
    pub fn inject_hint(&mut self, metrics: &BehaviorMetrics) -> Option<PromptHint> {
        let (i, trigger) = HintTrigger::ALL.into_iter().enumerate().find(|(_, t)| t.fires(metrics))?;
        let pool = trigger.pool();
        let kind = pool[self.cursor[i] % pool.len()];
        self.cursor[i] += 1;
        Some(PromptHint {
            kind,
            text: kind.text().to_string(),
            trigger,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(d: f64, s: u8, r: f64) -> BehaviorMetrics {
        BehaviorMetrics { d, r, e: 0, s }
    }

    #[test]
    fn depth_condition() {
        let h = HintInjector::new().inject_hint(&m(1.0, 1, 0.5)).unwrap();
        assert_eq!(h.trigger, HintTrigger::ShallowDepth);
    }

    #[test]
    fn nothing_fires() {
        assert_eq!(HintInjector::new().inject_hint(&m(4.0, 1, 0.5)), None);
    }

    #[test]
    fn no_state_write() {
        let mut inj = HintInjector::new();
        for d in [1.0, 5.0] {
            let h = inj.inject_hint(&m(d, 0, 0.5)).unwrap();
            assert_eq!(h.text, "Generate a transaction that modifies contract state");
        }
    }

    #[test]
    fn round_robin_within_trigger() {
        let mut inj = HintInjector::new();
        let kinds: Vec<_> = (0..4).map(|_| inj.inject_hint(&m(3.0, 1, 0.0)).unwrap().kind).collect();
        assert_eq!(
            kinds,
            [HintKind::TransferEther, HintKind::EscalatePrivilege, HintKind::ArithmeticBoundaries, HintKind::TransferEther]
        );
    }

    #[test]
    fn every_pool_entry_reachable() {
        let mut all: Vec<_> = HintTrigger::ALL.iter().flat_map(|t| t.pool().iter().copied()).collect();
        all.sort_by_key(|k| *k as u8);
        assert_eq!(all, HintKind::ALL);
    }

    proptest! {
        #[test]
        fn gating(d in 0.0f64..10.0, s in 0u8..=1, r in 0.0f64..=1.0) {
            let fired = d < SHALLOW_DEPTH || s == 0 || r < RARE_CALL_RATIO;
            let h = HintInjector::new().inject_hint(&m(d, s, r));
            prop_assert_eq!(h.is_some(), fired);
            if let Some(h) = h {
                prop_assert!(h.trigger.pool().contains(&h.kind));
                prop_assert_eq!(h.text.as_str(), h.kind.text());
            }
        }
    }
}
