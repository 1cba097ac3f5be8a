use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::abi::{FunctionDescriptor, Mutability, RawCall};
use crate::corpus::{Bundle, Role};
use crate::primitives::{parse_word, U256};

use super::hint::PromptHint;

/// Layer-1 output for one function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSummary {
    pub signature: String,
    pub mutability: String,
    pub summary: String,
}

/// One parsed line of model output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLine {
    pub call: RawCall,
    pub value: U256,
    pub from: usize,
}

pub type RawSequence = Vec<RawLine>;

/// Intermediate products of one pass through the prompting layers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBundle {
    pub abstraction: Vec<FunctionSummary>,
    pub sequences: Vec<RawSequence>,
    pub hint: Option<PromptHint>,
}

pub const TASK_SUMMARIZE: &str = "summarize";
pub const TASK_SEQUENCES: &str = "sequences";
pub const TASK_REFINE: &str = "refine";

pub fn mutability_word(m: Mutability) -> &'static str {
    match m {
        Mutability::View => "view",
        Mutability::NonPayable => "nonpayable",
        Mutability::Payable => "payable",
    }
}

pub fn parse_mutability(word: &str) -> Option<Mutability> {
    match word {
        "view" | "pure" => Some(Mutability::View),
        "nonpayable" => Some(Mutability::NonPayable),
        "payable" => Some(Mutability::Payable),
        _ => None,
    }
}

/// Templated summary used by the stub and for functions a model skipped.
pub fn template_summary(f: &FunctionDescriptor) -> String {
    let kind = match f.mutability {
        Mutability::View => "read-only view function",
        Mutability::NonPayable => "state-modifying function",
        Mutability::Payable => "payable state-modifying function",
    };
    format!("{kind} {}", f.signature())
}

fn role_word(r: Role) -> &'static str {
    match r {
        Role::Owner => "owner",
        Role::User => "user",
        Role::Attacker => "attacker",
    }
}

fn context(bundle: &Bundle, functions: &[String]) -> String {
    let mut s = String::from("FUNCTIONS:\n");
    for f in functions {
        s += &format!("- {f}\n");
    }
    s += "ACCOUNTS:\n";
    for (i, a) in bundle.accounts().iter().enumerate() {
        s += &format!("- {i} {} {}\n", a.address, role_word(a.role));
    }
    s += &format!("CONTRACT: {}\n", bundle.contract());
    s
}

fn summary_lines(summaries: &[FunctionSummary]) -> Vec<String> {
    summaries
        .iter()
        .map(|s| format!("{} {}: {}", s.signature, s.mutability, s.summary))
        .collect()
}

pub fn summarize_prompt(bundle: &Bundle) -> String {
    let mut s = format!(
        "You are a smart contract security analyst.\n\
         Summarize the purpose and behavior of each function of contract `{}` in one line.\n\
         Reply with one line per function in the form `<signature>: <summary>`.\n\
         TASK: {TASK_SUMMARIZE}\n\nFUNCTIONS:\n",
        bundle.name
    );
    for f in &bundle.abi {
        s += &format!("- {} {}\n", f.signature(), mutability_word(f.mutability));
    }
    s
}

pub fn sequences_prompt(
    bundle: &Bundle,
    summaries: &[FunctionSummary],
    hint: Option<&PromptHint>,
    count: usize,
    round: u64,
) -> String {
    let mut s = format!(
        "You generate transaction sequences for fuzzing contract `{}`.\n\
         Produce {count} valid and diverse sequences of function calls that reach deep contract behavior.\n\
         Write one call per line as `name(arg1,arg2) value=<wei> from=<account-index>` \
         and separate sequences with a blank line.\n\
         TASK: {TASK_SEQUENCES}\nBATCH: {round}\nCOUNT: {count}\n\n",
        bundle.name
    );
    s += &context(bundle, &summary_lines(summaries));
    if let Some(h) = hint {
        s += &format!("HINT: {}\n", h.text);
    }
    s
}

pub fn refine_prompt(bundle: &Bundle, summaries: &[FunctionSummary], sequences: &[RawSequence]) -> String {
    let mut s = String::from(
        "Rewrite each sequence below so it is more likely to trigger edge-case logic: \
         extreme argument values, unusual senders, repeated calls.\n\
         Keep the line format and return one rewritten sequence per input sequence, separated by blank lines.\n",
    );
    s += &format!("TASK: {TASK_REFINE}\n\n");
    s += &context(bundle, &summary_lines(summaries));
    s += "SEQUENCES:\n";
    s += &render_sequences(sequences);
    s
}

pub fn render_line(l: &RawLine) -> String {
    format!("{}({}) value={} from={}", l.call.name, l.call.args.join(","), l.value, l.from)
}

pub fn render_sequences(seqs: &[RawSequence]) -> String {
    seqs.iter()
        .map(|seq| seq.iter().map(render_line).collect::<Vec<_>>().join("\n"))
        .collect::<Vec<_>>()
        .join("\n\n")
        + "\n"
}

/// Split a prompt into `HEADER:` sections. Single-line headers keep their
/// inline value as the only body line.
pub fn sections(prompt: &str) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in prompt.lines() {
        let header = line
            .split_once(':')
            .filter(|(h, _)| !h.is_empty() && h.chars().all(|c| c.is_ascii_uppercase()));
        if let Some((h, rest)) = header {
            let body = out.entry(h.to_string()).or_default();
            if !rest.trim().is_empty() {
                body.push(rest.trim().to_string());
            }
            current = Some(h.to_string());
        } else if let Some(h) = &current {
            out.get_mut(h).unwrap().push(line.to_string());
        }
    }
    out
}

/// Split at commas outside brackets and quotes.
fn split_args(s: &str) -> Option<Vec<String>> {
    let mut args = vec![];
    let mut depth = 0i32;
    let mut quoted = false;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '"' => quoted = !quoted,
            '[' if !quoted => depth += 1,
            ']' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                args.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        if depth < 0 {
            return None;
        }
        cur.push(c);
    }
    if depth != 0 || quoted {
        return None;
    }
    if !cur.trim().is_empty() || !args.is_empty() {
        args.push(cur);
    }
    Some(
        args.into_iter()
            .map(|a| {
                let a = a.trim();
                a.strip_prefix('"').and_then(|x| x.strip_suffix('"')).unwrap_or(a).to_string()
            })
            .collect(),
    )
}

/// Parse `name(a,b) value=<wei> from=<idx>`. Missing `value` and `from`
/// default to zero.
pub fn parse_line(line: &str) -> Option<RawLine> {
    let line = line.trim().trim_start_matches(['-', '*', '`']).trim();
    let line = match line.split_once(". ") {
        Some((n, rest)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => rest.trim_start_matches('`'),
        _ => line,
    };
    let open = line.find('(')?;
    let name = line[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    let close = line.rfind(')')?;
    if close < open {
        return None;
    }
    let args = split_args(&line[open + 1..close])?;
    let mut value = U256::ZERO;
    let mut from = 0usize;
    for tok in line[close + 1..].trim().trim_end_matches('`').split_whitespace() {
        let (k, v) = tok.split_once('=')?;
        match k {
            "value" => value = parse_word(v)?,
            "from" => from = v.parse().ok()?,
            _ => return None,
        }
    }
    Some(RawLine {
        call: RawCall {
            name: name.to_string(),
            args,
        },
        value,
        from,
    })
}

/// Blank-line separated sequences; unparseable lines are dropped and
/// sequences left empty disappear.
pub fn parse_sequences(text: &str) -> Vec<RawSequence> {
    let mut out = vec![];
    let mut cur = vec![];
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if let Some(l) = parse_line(line) {
            cur.push(l);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// `<signature>: <summary>` lines keyed by signature.
pub fn parse_summaries(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim().trim_start_matches(['-', '*']).trim();
            let close = l.find(')')?;
            let (sig, rest) = l.split_at(close + 1);
            let summary = rest.split_once(':')?.1.trim();
            (!summary.is_empty()).then(|| (sig.trim().trim_matches('`').to_string(), summary.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_grammar() {
        let l = parse_line("transfer(0x22,[1,2],\"a,b\") value=0x10 from=2").unwrap();
        assert_eq!(l.call.name, "transfer");
        assert_eq!(l.call.args, ["0x22", "[1,2]", "a,b"]);
        assert_eq!(l.value, U256::from(16u8));
        assert_eq!(l.from, 2);
        let bare = parse_line("1. `ping()`").unwrap();
        assert_eq!((bare.call.args.len(), bare.value, bare.from), (0, U256::ZERO, 0));
    }

    #[test]
    fn garbage_lines_dropped() {
        for bad in ["hello world", "f(1 value=2", "f() gas=3", "f() value=x", "(1)", "f(]) value=0", "a b(1)"] {
            assert_eq!(parse_line(bad), None, "{bad}");
        }
        let seqs = parse_sequences("f(1)\nnonsense\n\n\njunk\n\ng() from=1\n");
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[1][0].from, 1);
    }

    #[test]
    fn render_parse_round_trip() {
        let seqs = parse_sequences("f(1,[2,3]) value=5 from=1\ng() value=0 from=0\n\nh(0x33) value=0 from=2\n");
        assert_eq!(parse_sequences(&render_sequences(&seqs)), seqs);
    }

    #[test]
    fn sections_split() {
        let s = sections("intro\nTASK: refine\nFUNCTIONS:\n- f() view\n- g(uint8) payable\nCOUNT: 3\n");
        assert_eq!(s["TASK"], ["refine"]);
        assert_eq!(s["FUNCTIONS"], ["- f() view", "- g(uint8) payable"]);
        assert_eq!(s["COUNT"], ["3"]);
    }
}
