use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::primitives::U256;
use crate::vm::opcode::*;

use super::expr::{ExprArena, ExprId, Node, Source};
use super::solver::{Goal, SolveResult, SolveStatus};

/// External QF_BV solver speaking SMT-LIB v2 on stdin/stdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtSolver {
    pub binary: PathBuf,
    #[serde(default = "default_args")]
    pub args: Vec<String>,
}

fn default_args() -> Vec<String> {
    vec!["-in".into()]
}

impl SmtSolver {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        Self {
            binary: binary.into(),
            args: default_args(),
        }
    }

    pub fn with_args(mut self, args: &[&str]) -> Self {
        self.args = args.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Solve by subprocess. Anything the process cannot express or answer
    /// comes back `Unknown`.
    pub fn solve(
        &self,
        arena: &ExprArena,
        goals: &[Goal],
        observed: &BTreeMap<Source, U256>,
        budget: Duration,
    ) -> SolveResult {
        let Some((script, names)) = script(arena, goals) else {
            return SolveResult::unknown();
        };
        match self.run(&script, budget) {
            Some(out) => parse_output(&out, &names, observed),
            None => SolveResult::unknown(),
        }
    }

    fn run(&self, script: &str, budget: Duration) -> Option<String> {
        let mut child = Command::new(&self.binary)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .ok()?;
        child.stdin.take()?.write_all(script.as_bytes()).ok()?;
        let deadline = Instant::now() + budget;
        loop {
            match child.try_wait().ok()? {
                Some(_) => break,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return None;
                }
                None => std::thread::sleep(Duration::from_millis(2)),
            }
        }
        let mut out = String::new();
        child.stdout.take()?.read_to_string(&mut out).ok()?;
        Some(out)
    }
}

fn word(v: U256) -> String {
    format!("#x{}", hex::encode(v.to_be_bytes::<32>()))
}

fn bool_to_word(cond: String) -> String {
    format!("(ite {cond} {} {})", word(U256::from(1u8)), word(U256::ZERO))
}

fn zero_guard(divisor: &str, expr: String) -> String {
    format!("(ite (= {divisor} {}) {} {expr})", word(U256::ZERO), word(U256::ZERO))
}

/// Emit the query; `None` for fragments outside QF_BV (opaque hashes, EXP
/// with a symbolic exponent).
pub fn script(arena: &ExprArena, goals: &[Goal]) -> Option<(String, Vec<(String, Source)>)> {
    let roots: Vec<ExprId> = goals.iter().map(|g| g.predicate).collect();
    let order = arena.reachable(&roots);
    let mut names: Vec<(String, Source)> = vec![];
    let mut out = String::from("(set-logic QF_BV)\n(set-option :produce-models true)\n");
    for &n in &order {
        if let Node::Var(s) = arena.node(n) {
            let name = format!("s{}", names.len());
            out += &format!("(declare-fun {name} () (_ BitVec 256))\n");
            names.push((name, *s));
        }
    }
    let name_of = |s: &Source| names.iter().find(|(_, x)| x == s).map(|(n, _)| n.clone()).unwrap();
    let mut text: BTreeMap<ExprId, String> = BTreeMap::new();
    for &n in &order {
        let t = match arena.node(n) {
            Node::Const(c) => word(*c),
            Node::Var(s) => name_of(s),
            Node::Opaque { .. } => return None,
            Node::Un { op, a } => {
                let a = &text[a];
                match *op {
                    ISZERO => bool_to_word(format!("(= {a} {})", word(U256::ZERO))),
                    NOT => format!("(bvnot {a})"),
                    _ => return None,
                }
            }
            Node::Bin { op, a, b } => {
                let (x, y) = (&text[a], &text[b]);
                match *op {
                    ADD => format!("(bvadd {x} {y})"),
                    SUB => format!("(bvsub {x} {y})"),
                    MUL => format!("(bvmul {x} {y})"),
                    DIV => zero_guard(y, format!("(bvudiv {x} {y})")),
                    SDIV => zero_guard(y, format!("(bvsdiv {x} {y})")),
                    MOD => zero_guard(y, format!("(bvurem {x} {y})")),
                    AND => format!("(bvand {x} {y})"),
                    OR => format!("(bvor {x} {y})"),
                    XOR => format!("(bvxor {x} {y})"),
                    LT => bool_to_word(format!("(bvult {x} {y})")),
                    GT => bool_to_word(format!("(bvugt {x} {y})")),
                    SLT => bool_to_word(format!("(bvslt {x} {y})")),
                    SGT => bool_to_word(format!("(bvsgt {x} {y})")),
                    EQ => bool_to_word(format!("(= {x} {y})")),
                    SHL => format!("(bvshl {y} {x})"),
                    SHR => format!("(bvlshr {y} {x})"),
                    BYTE => format!(
                        "(ite (bvult {x} {thirty_two}) (bvand (bvlshr {y} (bvmul (bvsub {thirty_one} {x}) {eight})) {ff}) {zero})",
                        thirty_two = word(U256::from(32u8)),
                        thirty_one = word(U256::from(31u8)),
                        eight = word(U256::from(8u8)),
                        ff = word(U256::from(0xffu8)),
                        zero = word(U256::ZERO),
                    ),
                    EXP => match arena.as_const(*b) {
                        Some(e) if e <= U256::from(256u16) => {
                            let mut acc = word(U256::from(1u8));
                            for _ in 0..e.to::<u32>() {
                                acc = format!("(bvmul {acc} {x})");
                            }
                            acc
                        }
                        _ => return None,
                    },
                    _ => return None,
                }
            }
        };
        text.insert(n, t);
    }
    for g in goals {
        let cmp = if g.want { "distinct" } else { "=" };
        out += &format!("(assert ({cmp} {} {}))\n", text[&g.predicate], word(U256::ZERO));
    }
    out += "(check-sat)\n";
    if !names.is_empty() {
        let all: Vec<&str> = names.iter().map(|(n, _)| n.as_str()).collect();
        out += &format!("(get-value ({}))\n", all.join(" "));
    }
    out += "(exit)\n";
    Some((out, names))
}

fn parse_value(tok: &str) -> Option<U256> {
    if let Some(h) = tok.strip_prefix("#x") {
        U256::from_str_radix(h, 16).ok()
    } else if let Some(b) = tok.strip_prefix("#b") {
        U256::from_str_radix(b, 2).ok()
    } else {
        tok.strip_prefix("bv").and_then(|d| U256::from_str_radix(d, 10).ok())
    }
}

/// Read the `check-sat` verdict and the `get-value` model.
pub fn parse_output(out: &str, names: &[(String, Source)], observed: &BTreeMap<Source, U256>) -> SolveResult {
    let verdict = out.split_whitespace().next().unwrap_or("");
    match verdict {
        "unsat" => return SolveResult::unsat(),
        "sat" => {}
        _ => return SolveResult::unknown(),
    }
    let spaced = out.replace('(', " ( ").replace(')', " ) ");
    let toks: Vec<&str> = spaced.split_whitespace().collect();
    let mut assignment = BTreeMap::new();
    for (name, src) in names {
        let pos = toks.iter().position(|t| t == name);
        let value = pos.and_then(|i| match toks.get(i + 1) {
            // `(_ bv123 256)`
            Some(&"(") => toks.get(i + 3).and_then(|t| parse_value(t)),
            Some(t) => parse_value(t),
            None => None,
        });
        let Some(v) = value else {
            return SolveResult::unknown();
        };
        if observed.get(src).copied().unwrap_or_default() != v {
            assignment.insert(*src, v);
        }
    }
    SolveResult {
        status: SolveStatus::Sat,
        assignment,
    }
}
