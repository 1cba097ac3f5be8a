use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abi::low_bits;
use crate::primitives::U256;
use crate::vm::opcode::*;

use super::expr::{peel, Evaluator, ExprArena, ExprId, Node, Source};

/// Trials of the random and byte-enumeration search.
pub const SEARCH_TRIALS: usize = 1 << 16;
const REPAIR_ROUNDS: usize = 64;
const MAX_INVERT_DEPTH: usize = 32;
const MAX_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Sources whose value must change; everything else keeps its observed value.
    pub assignment: BTreeMap<Source, U256>,
}

impl SolveResult {
    pub fn unsat() -> Self {
        Self {
            status: SolveStatus::Unsat,
            assignment: BTreeMap::new(),
        }
    }

    pub fn unknown() -> Self {
        Self {
            status: SolveStatus::Unknown,
            assignment: BTreeMap::new(),
        }
    }
}

/// `predicate != 0` must equal `want`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Goal {
    pub predicate: ExprId,
    pub want: bool,
}

fn one() -> U256 {
    U256::from(1u8)
}

/// Some `x` with `x * k == t` modulo 2^256.
fn mul_preimage(t: U256, k: U256) -> Option<U256> {
    if k.is_zero() {
        return t.is_zero().then_some(U256::ZERO);
    }
    let j = k.trailing_zeros();
    if !(t & low_bits(j)).is_zero() {
        return None;
    }
    let odd = k >> j;
    // Newton iteration for the inverse of an odd word; each step doubles the correct bits.
    let mut inv = odd;
    for _ in 0..8 {
        inv = inv.wrapping_mul(U256::from(2u8).wrapping_sub(odd.wrapping_mul(inv)));
    }
    Some((t >> j).wrapping_mul(inv))
}

struct Problem<'a> {
    arena: &'a ExprArena,
    goals: Vec<Goal>,
    observed: &'a BTreeMap<Source, U256>,
    eval: Evaluator<'a>,
}

impl<'a> Problem<'a> {
    fn holds(&self, assign: &BTreeMap<Source, U256>) -> Vec<bool> {
        self.eval
            .run(assign, self.observed)
            .into_iter()
            .zip(&self.goals)
            .map(|(v, g)| v.is_some_and(|v| !v.is_zero() == g.want))
            .collect()
    }

    fn value(&self, id: ExprId, assign: &BTreeMap<Source, U256>) -> Option<U256> {
        self.arena.eval(id, assign, self.observed)
    }

    /// Assignments making `id` evaluate to `target`, walking down the
    /// expression with every other operand held at its current value.
    fn invert_at(
        &self,
        id: ExprId,
        target: U256,
        assign: &BTreeMap<Source, U256>,
        out: &mut Vec<(Source, U256)>,
        depth: usize,
    ) {
        if depth > MAX_INVERT_DEPTH || out.len() >= MAX_CANDIDATES {
            return;
        }
        let go = |x: ExprId, t: U256, out: &mut Vec<(Source, U256)>| self.invert_at(x, t, assign, out, depth + 1);
        match self.arena.node(id) {
            Node::Var(s) => out.push((*s, target)),
            Node::Un { op: NOT, a } => go(*a, !target, out),
            Node::Un { op: ISZERO, a } => {
                if target.is_zero() {
                    go(*a, one(), out);
                    go(*a, U256::MAX, out);
                } else if target == one() {
                    go(*a, U256::ZERO, out);
                }
            }
            Node::Bin { op: LT | GT | SLT | SGT | EQ, .. } => {
                if target <= one() {
                    self.suggest_at(id, !target.is_zero(), assign, out, depth)
                }
            }
            &Node::Bin { op, a, b } => {
                for (x, other, x_is_a) in [(a, b, true), (b, a, false)] {
                    if self.arena.support(x).is_empty() {
                        continue;
                    }
                    let Some(k) = self.value(other, assign) else { continue };
                    let cur = self.value(x, assign).unwrap_or_default();
                    match (op, x_is_a) {
                        (ADD, _) => go(x, target.wrapping_sub(k), out),
                        (SUB, true) => go(x, target.wrapping_add(k), out),
                        (SUB, false) => go(x, k.wrapping_sub(target), out),
                        (XOR, _) => go(x, target ^ k, out),
                        (MUL, _) => {
                            if let Some(v) = mul_preimage(target, k) {
                                go(x, v, out)
                            }
                        }
                        (AND, _) if (target & !k).is_zero() => go(x, target | (cur & !k), out),
                        (OR, _) if target & k == k => {
                            go(x, target & !k, out);
                            go(x, target, out);
                        }
                        (DIV, true) if !k.is_zero() => {
                            if let Some(v) = target.checked_mul(k) {
                                go(x, v, out)
                            }
                        }
                        (MOD, true) if !k.is_zero() && target < k => {
                            let base = cur - cur % k;
                            if let Some(v) = base.checked_add(target) {
                                go(x, v, out);
                            }
                            go(x, target, out);
                        }
                        // SHL and SHR take the shift first: `a` is the shift, `b` the value.
                        (SHL, false) if k < U256::from(256u16) => {
                            let s = k.to::<usize>();
                            if (target & low_bits(s)).is_zero() {
                                go(x, (target >> s) | (cur & !(U256::MAX >> s)), out)
                            }
                        }
                        (SHR, false) if k < U256::from(256u16) => {
                            let s = k.to::<usize>();
                            if s == 0 || (target >> (256 - s)).is_zero() {
                                go(x, (target << s) | (cur & low_bits(s)), out)
                            }
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }

    /// Candidate changes making `predicate != 0` equal `want`.
    fn suggest(&self, predicate: ExprId, want: bool, assign: &BTreeMap<Source, U256>, out: &mut Vec<(Source, U256)>) {
        self.suggest_at(predicate, want, assign, out, 0)
    }

    fn suggest_at(
        &self,
        predicate: ExprId,
        want: bool,
        assign: &BTreeMap<Source, U256>,
        out: &mut Vec<(Source, U256)>,
        depth: usize,
    ) {
        let (core, polarity) = peel(self.arena, predicate);
        let want = want == polarity;
        let go = |x: ExprId, t: U256, out: &mut Vec<(Source, U256)>| self.invert_at(x, t, assign, out, depth + 1);
        let &Node::Bin { op, a, b } = self.arena.node(core) else {
            return self.generic(core, want, assign, out, depth);
        };
        if !matches!(op, EQ | LT | GT | SLT | SGT) {
            return self.generic(core, want, assign, out, depth);
        }
        // Each symbolic side in turn, against the other side's current value;
        // sides without sources first so the constant case comes out on top.
        let mut sides = [(a, b, true), (b, a, false)];
        sides.sort_by_key(|(_, other, _)| !self.arena.support(*other).is_empty());
        for (x, other, x_is_a) in sides {
            if self.arena.support(x).is_empty() {
                continue;
            }
            let Some(k) = self.value(other, assign) else { continue };
            if op == EQ {
                if want {
                    go(x, k, out);
                } else {
                    go(x, k.wrapping_add(one()), out);
                    go(x, k.wrapping_sub(one()), out);
                }
                continue;
            }
            // LT(a, b) is a < b, GT(a, b) is a > b. Normalize to `x < k` or `k < x`.
            let x_is_smaller = matches!(op, LT | SLT) == x_is_a;
            let (min, max) = if matches!(op, SLT | SGT) {
                (one() << 255, (one() << 255) - one())
            } else {
                (U256::ZERO, U256::MAX)
            };
            // x < k wanted: k-1 and the minimum; x >= k wanted: k and the maximum.
            if want == x_is_smaller {
                if k != min {
                    go(x, k.wrapping_sub(one()), out);
                }
                go(x, min, out);
            } else {
                if x_is_smaller {
                    go(x, k, out);
                } else if k != max {
                    go(x, k.wrapping_add(one()), out);
                }
                go(x, max, out);
            }
        }
    }

    fn generic(&self, id: ExprId, want: bool, assign: &BTreeMap<Source, U256>, out: &mut Vec<(Source, U256)>, depth: usize) {
        if want {
            self.invert_at(id, one(), assign, out, depth + 1);
            self.invert_at(id, U256::MAX, assign, out, depth + 1);
        } else {
            self.invert_at(id, U256::ZERO, assign, out, depth + 1);
        }
    }
}

/// Per-source bounds implied by comparisons of a bare source with a constant.
#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: U256,
    hi: U256,
}

fn bare_bounds(arena: &ExprArena, goals: &[Goal], observed: &BTreeMap<Source, U256>) -> bool {
    let mut iv: BTreeMap<Source, Interval> = BTreeMap::new();
    let mut eqs: BTreeMap<Source, BTreeSet<U256>> = BTreeMap::new();
    let mut neqs: BTreeMap<Source, BTreeSet<U256>> = BTreeMap::new();
    let empty = BTreeMap::new();
    for g in goals {
        let (core, polarity) = peel(arena, g.predicate);
        let want = g.want == polarity;
        if let Node::Var(s) = arena.node(core) {
            // x != 0 or x == 0.
            if want {
                neqs.entry(*s).or_default().insert(U256::ZERO);
            } else {
                eqs.entry(*s).or_default().insert(U256::ZERO);
            }
            continue;
        }
        let Node::Bin { op, a, b } = arena.node(core) else { continue };
        let konst = |x: ExprId| arena.support(x).is_empty().then(|| arena.eval(x, &empty, observed)).flatten();
        let (s, k, x_left) = match (arena.node(*a), arena.node(*b)) {
            (Node::Var(s), _) => match konst(*b) {
                Some(k) => (*s, k, true),
                None => continue,
            },
            (_, Node::Var(s)) => match konst(*a) {
                Some(k) => (*s, k, false),
                None => continue,
            },
            _ => continue,
        };
        let e = iv.entry(s).or_insert(Interval {
            lo: U256::ZERO,
            hi: U256::MAX,
        });
        // Express as x < k, x > k, x <= k or x >= k.
        let lt = match *op {
            LT => x_left,
            GT => !x_left,
            EQ => {
                if want {
                    eqs.entry(s).or_default().insert(k);
                } else {
                    neqs.entry(s).or_default().insert(k);
                }
                continue;
            }
            _ => continue,
        };
        match (lt, want) {
            (true, true) => {
                if k.is_zero() {
                    return true;
                }
                e.hi = e.hi.min(k - one());
            }
            (true, false) => e.lo = e.lo.max(k),
            (false, true) => {
                if k == U256::MAX {
                    return true;
                }
                e.lo = e.lo.max(k + one());
            }
            (false, false) => e.hi = e.hi.min(k),
        }
    }
    for (s, e) in &iv {
        if e.lo > e.hi {
            return true;
        }
        if let Some(vals) = eqs.get(s) {
            if vals.iter().any(|v| *v < e.lo || *v > e.hi) {
                return true;
            }
        }
        if e.lo == e.hi && neqs.get(s).is_some_and(|n| n.contains(&e.lo)) {
            return true;
        }
    }
    for (s, vals) in &eqs {
        if vals.len() > 1 || neqs.get(s).is_some_and(|n| vals.iter().any(|v| n.contains(v))) {
            return true;
        }
    }
    false
}

/// Search for an assignment meeting every goal. Deterministic for fixed input.
pub fn solve(
    arena: &ExprArena,
    goals: &[Goal],
    observed: &BTreeMap<Source, U256>,
    deadline: Option<Instant>,
) -> SolveResult {
    let empty = BTreeMap::new();
    let mut live = vec![];
    for g in goals {
        if arena.support(g.predicate).is_empty() {
            match arena.eval(g.predicate, &empty, observed) {
                Some(v) if !v.is_zero() == g.want => continue,
                _ => return SolveResult::unsat(),
            }
        }
        live.push(*g);
    }
    if live.is_empty() {
        return SolveResult {
            status: SolveStatus::Sat,
            assignment: BTreeMap::new(),
        };
    }
    if bare_bounds(arena, &live, observed) {
        return SolveResult::unsat();
    }
    let roots: Vec<ExprId> = live.iter().map(|g| g.predicate).collect();
    let p = Problem {
        arena,
        goals: live,
        observed,
        eval: Evaluator::new(arena, &roots),
    };
    let sat = |assign: BTreeMap<Source, U256>| {
        let changed: BTreeMap<Source, U256> =
            assign.into_iter().filter(|(s, v)| observed.get(s).copied().unwrap_or_default() != *v).collect();
        SolveResult {
            status: SolveStatus::Sat,
            assignment: changed,
        }
    };

    // Guided repair: fix the first violated goal with a suggestion that
    // strictly reduces the number of violations.
    let mut assign: BTreeMap<Source, U256> = BTreeMap::new();
    for _ in 0..REPAIR_ROUNDS {
        let ok = p.holds(&assign);
        let violated = ok.iter().filter(|x| !**x).count();
        if violated == 0 {
            return sat(assign);
        }
        let first = ok.iter().position(|x| !x).unwrap();
        let mut cands = vec![];
        p.suggest(p.goals[first].predicate, p.goals[first].want, &assign, &mut cands);
        let mut best: Option<(usize, BTreeMap<Source, U256>)> = None;
        for (s, v) in cands {
            let mut next = assign.clone();
            next.insert(s, v);
            let ok2 = p.holds(&next);
            let v2 = ok2.iter().filter(|x| !**x).count();
            if ok2[first] && best.as_ref().is_none_or(|(b, _)| v2 < *b) {
                best = Some((v2, next));
            }
        }
        match best {
            Some((v2, next)) if v2 < violated || next != assign => assign = next,
            _ => break,
        }
    }

    // Bounded search over the goals' sources.
    let vars: Vec<Source> = roots.iter().flat_map(|&r| arena.support(r)).collect::<BTreeSet<_>>().into_iter().collect();
    if vars.is_empty() {
        return SolveResult::unknown();
    }
    let mut dict: Vec<U256> = vec![U256::ZERO, one(), U256::MAX];
    for &n in &arena.reachable(&roots) {
        if let Node::Const(c) = arena.node(n) {
            dict.extend([*c, c.wrapping_add(one()), c.wrapping_sub(one())]);
        }
    }
    dict.sort();
    dict.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(roots.len() as u64 ^ ((vars.len() as u64) << 32));
    for trial in 0..SEARCH_TRIALS {
        if trial % 256 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let mut next = assign.clone();
        let s = vars[trial % vars.len()];
        let cur = next.get(&s).or_else(|| observed.get(&s)).copied().unwrap_or_default();
        let round = trial / vars.len();
        let v = match round % 4 {
            0 if round / 4 < dict.len() => dict[round / 4],
            1 => {
                // Byte enumeration: position and value from the round index.
                let k = (round / 4) % (32 * 256);
                let (pos, byte) = (k / 256, (k % 256) as u8);
                let mut bytes = cur.to_be_bytes::<32>();
                bytes[31 - pos] = byte;
                U256::from_be_bytes(bytes)
            }
            2 => U256::from(rng.random_range(0u64..=65_536)),
            _ => U256::from_limbs([rng.random(), rng.random(), rng.random(), rng.random()]),
        };
        next.insert(s, v);
        if vars.len() > 1 && rng.random_bool(0.25) {
            let s2 = vars[rng.random_range(0..vars.len())];
            next.insert(s2, dict[rng.random_range(0..dict.len())]);
        }
        if p.holds(&next).iter().all(|x| *x) {
            return sat(next);
        }
    }
    SolveResult::unknown()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arg(w: usize) -> Source {
        Source::Arg { tx: 0, word: w }
    }

    fn setup() -> (ExprArena, BTreeMap<Source, U256>) {
        let mut obs = BTreeMap::new();
        obs.insert(arg(0), U256::from(5u8));
        obs.insert(arg(1), U256::from(9u8));
        (ExprArena::new(), obs)
    }

    #[test]
    fn multiplicative_inverse() {
        for (t, k) in [(993u64, 3u64), (12, 4), (7, 1), (0, 8)] {
            let x = mul_preimage(U256::from(t), U256::from(k)).unwrap();
            assert_eq!(x.wrapping_mul(U256::from(k)), U256::from(t));
        }
        assert_eq!(mul_preimage(U256::from(3u8), U256::from(2u8)), None);
        let big = U256::MAX - U256::from(12345u16);
        let x = mul_preimage(big, U256::from(999u16)).unwrap();
        assert_eq!(x.wrapping_mul(U256::from(999u16)), big);
    }

    #[test]
    fn equality_with_constant() {
        let (mut ar, obs) = setup();
        let x = ar.var(arg(0));
        let k = ar.constant(U256::from(0xDEADBEEFu64));
        let eq = ar.bin(EQ, k, x);
        let r = solve(&ar, &[Goal { predicate: eq, want: true }], &obs, None);
        assert_eq!(r.status, SolveStatus::Sat);
        assert_eq!(r.assignment[&arg(0)], U256::from(0xDEADBEEFu64));
    }

    #[test]
    fn empty_interval_unsat() {
        let (mut ar, obs) = setup();
        let x = ar.var(arg(0));
        let ten = ar.constant(U256::from(10u8));
        let twenty = ar.constant(U256::from(20u8));
        let lt = ar.bin(LT, x, ten);
        let gt = ar.bin(GT, x, twenty);
        let goals = [Goal { predicate: lt, want: true }, Goal { predicate: gt, want: true }];
        assert_eq!(solve(&ar, &goals, &obs, None).status, SolveStatus::Unsat);
    }

    #[test]
    fn linear_and_masked() {
        let (mut ar, obs) = setup();
        let x = ar.var(arg(0));
        let y = ar.var(arg(1));
        let c7 = ar.constant(U256::from(7u8));
        let sum = ar.bin(ADD, c7, x);
        let mask = ar.constant(U256::from(0xffu8));
        let low = ar.bin(AND, mask, y);
        let k = ar.constant(U256::from(100u8));
        let k2 = ar.constant(U256::from(0x42u8));
        let g1 = ar.bin(EQ, k, sum);
        let g2 = ar.bin(EQ, k2, low);
        let g3 = ar.un(ISZERO, g2);
        let goals = [Goal { predicate: g1, want: true }, Goal { predicate: g3, want: false }];
        let r = solve(&ar, &goals, &obs, None);
        assert_eq!(r.status, SolveStatus::Sat);
        assert_eq!(r.assignment[&arg(0)], U256::from(93u8));
        assert_eq!(r.assignment[&arg(1)] & U256::from(0xffu8), U256::from(0x42u8));
    }

    #[test]
    fn two_symbolic_sides() {
        let (mut ar, obs) = setup();
        let x = ar.var(arg(0));
        let y = ar.var(arg(1));
        // x = 5, y = 9: flip y < x and keep x != 0.
        let lt = ar.bin(LT, y, x);
        let nz = ar.un(ISZERO, x);
        let goals = [Goal { predicate: lt, want: true }, Goal { predicate: nz, want: false }];
        let r = solve(&ar, &goals, &obs, None);
        assert_eq!(r.status, SolveStatus::Sat);
        let val = |s| r.assignment.get(&s).or(obs.get(&s)).copied().unwrap();
        assert!(val(arg(1)) < val(arg(0)));
    }

    #[test]
    fn opaque_equality_unknown() {
        let (mut ar, obs) = setup();
        let h = ar.opaque(U256::from(1234u16), vec![arg(0)]);
        let k = ar.constant(U256::from(99u8));
        let eq = ar.bin(EQ, k, h);
        let r = solve(&ar, &[Goal { predicate: eq, want: true }], &obs, None);
        assert_eq!(r.status, SolveStatus::Unknown);
    }

    #[test]
    fn signed_bounds_and_mod() {
        let (mut ar, obs) = setup();
        let t = Source::Timestamp { tx: 0 };
        let mut obs = obs;
        obs.insert(t, U256::from(1_700_000_000u64));
        let ts = ar.var(t);
        let two = ar.constant(U256::from(2u8));
        let m = ar.bin(MOD, ts, two);
        let r = solve(&ar, &[Goal { predicate: m, want: true }], &obs, None);
        assert_eq!(r.status, SolveStatus::Sat);
        assert_eq!(r.assignment[&t] % U256::from(2u8), U256::from(1u8));
        let x = ar.var(arg(0));
        let zero = ar.constant(U256::ZERO);
        let neg = ar.bin(SLT, x, zero);
        let r = solve(&ar, &[Goal { predicate: neg, want: true }], &obs, None);
        assert_eq!(r.status, SolveStatus::Sat);
        assert!(r.assignment[&arg(0)].bit(255));
    }
}
