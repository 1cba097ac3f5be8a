use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::primitives::U256;
use crate::vm::opcode::*;
use crate::vm::{eval_binary, eval_unary};

/// An input the solver may choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// The `word`-th 32-byte argument word of transaction `tx`.
    Arg { tx: usize, word: usize },
    Timestamp { tx: usize },
    BlockNumber { tx: usize },
    CallValue { tx: usize },
}

impl Source {
    pub fn tx(&self) -> usize {
        match *self {
            Source::Arg { tx, .. } | Source::Timestamp { tx } | Source::BlockNumber { tx } | Source::CallValue { tx } => tx,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Arg { tx, word } => write!(f, "tx{tx}.arg{word}"),
            Source::Timestamp { tx } => write!(f, "tx{tx}.timestamp"),
            Source::BlockNumber { tx } => write!(f, "tx{tx}.number"),
            Source::CallValue { tx } => write!(f, "tx{tx}.callvalue"),
        }
    }
}

pub type ExprId = u32;

/// Expression node. Operand order follows the stack: `a` was on top.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Const(U256),
    Var(Source),
    Bin { op: u8, a: ExprId, b: ExprId },
    Un { op: u8, a: ExprId },
    /// Hash of symbolic data. Never inverted; keeps its observed value only
    /// while every source it depends on keeps its observed value.
    Opaque { id: u32, observed: U256, deps: Vec<Source> },
}

/// Hash-consed expression DAG. Children always precede parents.
#[derive(Debug, Clone, Default)]
pub struct ExprArena {
    nodes: Vec<Node>,
    index: HashMap<Node, ExprId>,
    opaque_count: u32,
}

impl ExprArena {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: ExprId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn intern(&mut self, n: Node) -> ExprId {
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let id = self.nodes.len() as ExprId;
        self.nodes.push(n.clone());
        self.index.insert(n, id);
        id
    }

    pub fn constant(&mut self, v: U256) -> ExprId {
        self.intern(Node::Const(v))
    }

    pub fn var(&mut self, s: Source) -> ExprId {
        self.intern(Node::Var(s))
    }

    pub fn bin(&mut self, op: u8, a: ExprId, b: ExprId) -> ExprId {
        self.intern(Node::Bin { op, a, b })
    }

    pub fn un(&mut self, op: u8, a: ExprId) -> ExprId {
        self.intern(Node::Un { op, a })
    }

    pub fn opaque(&mut self, observed: U256, deps: Vec<Source>) -> ExprId {
        let id = self.opaque_count;
        self.opaque_count += 1;
        self.intern(Node::Opaque { id, observed, deps })
    }

    /// Constant value when the expression has no sources.
    pub fn as_const(&self, id: ExprId) -> Option<U256> {
        match self.node(id) {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn support(&self, id: ExprId) -> BTreeSet<Source> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            match self.node(n) {
                Node::Const(_) => {}
                Node::Var(s) => {
                    out.insert(*s);
                }
                Node::Bin { a, b, .. } => stack.extend([*a, *b]),
                Node::Un { a, .. } => stack.push(*a),
                Node::Opaque { deps, .. } => out.extend(deps.iter().copied()),
            }
        }
        out
    }

    pub fn has_opaque(&self, id: ExprId) -> bool {
        self.reachable(&[id]).iter().any(|&n| matches!(self.node(n), Node::Opaque { .. }))
    }

    /// Nodes reachable from `roots`, ascending (children first).
    pub fn reachable(&self, roots: &[ExprId]) -> Vec<ExprId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<ExprId> = roots.to_vec();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            match self.node(n) {
                Node::Bin { a, b, .. } => stack.extend([*a, *b]),
                Node::Un { a, .. } => stack.push(*a),
                _ => {}
            }
        }
        seen.into_iter().collect()
    }

    /// Evaluate under `assign`, falling back to `observed` for sources it
    /// omits. `None` when an opaque node's inputs moved.
    pub fn eval(&self, id: ExprId, assign: &BTreeMap<Source, U256>, observed: &BTreeMap<Source, U256>) -> Option<U256> {
        Evaluator::new(self, &[id]).run(assign, observed)[0]
    }

    pub fn render(&self, id: ExprId) -> String {
        match self.node(id) {
            Node::Const(v) => {
                if *v < U256::from(1u64 << 32) {
                    v.to_string()
                } else {
                    format!("{v:#x}")
                }
            }
            Node::Var(s) => s.to_string(),
            Node::Bin { op, a, b } => format!("{}({}, {})", op_name(*op), self.render(*a), self.render(*b)),
            Node::Un { op, a } => format!("{}({})", op_name(*op), self.render(*a)),
            Node::Opaque { id, .. } => format!("keccak#{id}"),
        }
    }
}

pub fn op_name(op: u8) -> String {
    crate::vm::opcode::name(op).to_ascii_lowercase()
}

/// Repeated evaluation of a fixed set of roots.
pub struct Evaluator<'a> {
    arena: &'a ExprArena,
    order: Vec<ExprId>,
    slot: HashMap<ExprId, usize>,
    roots: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(arena: &'a ExprArena, roots: &[ExprId]) -> Self {
        let order = arena.reachable(roots);
        let slot: HashMap<ExprId, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let roots = roots.iter().map(|r| slot[r]).collect();
        Self { arena, order, slot, roots }
    }

    pub fn run(&self, assign: &BTreeMap<Source, U256>, observed: &BTreeMap<Source, U256>) -> Vec<Option<U256>> {
        let value_of = |s: &Source| assign.get(s).or_else(|| observed.get(s)).copied().unwrap_or_default();
        let mut vals: Vec<Option<U256>> = Vec::with_capacity(self.order.len());
        for &n in &self.order {
            let v = match self.arena.node(n) {
                Node::Const(c) => Some(*c),
                Node::Var(s) => Some(value_of(s)),
                Node::Bin { op, a, b } => match (vals[self.slot[a]], vals[self.slot[b]]) {
                    (Some(x), Some(y)) => Some(eval_binary(*op, x, y)),
                    _ => None,
                },
                Node::Un { op, a } => vals[self.slot[a]].map(|x| eval_unary(*op, x)),
                Node::Opaque { observed: o, deps, .. } => deps
                    .iter()
                    .all(|d| value_of(d) == observed.get(d).copied().unwrap_or_default())
                    .then_some(*o),
            };
            vals.push(v);
        }
        self.roots.iter().map(|&r| vals[r]).collect()
    }
}

/// Boolean view of a word-valued comparison node, with `ISZERO` layers
/// peeled off: `(core, polarity)` where the original is nonzero iff
/// `core` is nonzero xor `!polarity`.
pub fn peel(arena: &ExprArena, mut id: ExprId) -> (ExprId, bool) {
    let mut polarity = true;
    while let Node::Un { op: ISZERO, a } = arena.node(id) {
        id = *a;
        polarity = !polarity;
    }
    (id, polarity)
}
