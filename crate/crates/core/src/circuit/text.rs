//! The `eac v1` text format.
//!
//! ```text
//! eac v1 inputs 1
//! g0 = input 0
//! g1 = add g0 g0
//! outputs g1
//! ```

use std::fmt;
use std::fmt::Write as _;

use super::{Circuit, GateKind};
use crate::literal;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Syntax { line: usize, msg: String },
    DuplicateGateId { line: usize, id: usize },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { line, msg } => write!(f, "syntax error on line {line}: {msg}"),
            ParseError::DuplicateGateId { line, id } => write!(f, "duplicate gate id g{id} on line {line}"),
        }
    }
}

impl std::error::Error for ParseError {}

pub fn serialize(c: &Circuit) -> String {
    let mut s = String::new();
    writeln!(s, "eac v1 inputs {}", c.input_arity).unwrap();
    for (i, g) in c.gates.iter().enumerate() {
        write!(s, "g{i} = {}", g.mnemonic()).unwrap();
        match g {
            GateKind::Const(v) => write!(s, " {v}").unwrap(),
            GateKind::Input(k) => write!(s, " {k}").unwrap(),
            _ => {
                for o in g.operands() {
                    write!(s, " g{o}").unwrap();
                }
            }
        }
        s.push('\n');
    }
    s.push_str("outputs");
    for o in &c.outputs {
        write!(s, " g{o}").unwrap();
    }
    s.push('\n');
    s
}

fn gate_ref(tok: &str, line: usize) -> Result<usize, ParseError> {
    tok.strip_prefix('g')
        .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| ParseError::Syntax { line, msg: format!("bad gate reference `{tok}`") })
}

/// Parses the text format. Gate ids must appear as `g0, g1, …` in order.
pub fn parse(text: &str) -> Result<Circuit, ParseError> {
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });
    let syn = |line: usize, msg: &str| ParseError::Syntax { line, msg: msg.to_string() };
    let (hl, header) = lines.next().ok_or_else(|| syn(1, "empty input"))?;
    let arity = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["eac", "v1", "inputs", n] => n.parse::<usize>().map_err(|_| syn(hl, "bad input arity"))?,
        _ => return Err(syn(hl, "expected `eac v1 inputs <n>`")),
    };
    let mut c = Circuit::new(arity);
    let mut outputs = None;
    for (ln, l) in lines {
        if outputs.is_some() {
            return Err(syn(ln, "content after `outputs` line"));
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks[0] == "outputs" {
            outputs = Some(toks[1..].iter().map(|t| gate_ref(t, ln)).collect::<Result<Vec<_>, _>>()?);
            continue;
        }
        if toks.len() < 3 || toks[1] != "=" {
            return Err(syn(ln, "expected `g<k> = <op> …`"));
        }
        let id = gate_ref(toks[0], ln)?;
        if id < c.gates.len() {
            return Err(ParseError::DuplicateGateId { line: ln, id });
        }
        if id != c.gates.len() {
            return Err(syn(ln, &format!("expected gate id g{}", c.gates.len())));
        }
        let args = &toks[3..];
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(syn(ln, &format!("`{}` takes {n} operand(s)", toks[2])))
            }
        };
        let r = |k: usize| gate_ref(args[k], ln);
        let g = match toks[2] {
            "const" => {
                want(1)?;
                literal::parse_rational(args[0]).map_err(|e| syn(ln, &e.to_string()))?;
                GateKind::Const(args[0].to_string())
            }
            "input" => {
                want(1)?;
                GateKind::Input(args[0].parse().map_err(|_| syn(ln, "bad input index"))?)
            }
            "add" => {
                want(2)?;
                GateKind::Add(r(0)?, r(1)?)
            }
            "sub" => {
                want(2)?;
                GateKind::Sub(r(0)?, r(1)?)
            }
            "mul" => {
                want(2)?;
                GateKind::Mul(r(0)?, r(1)?)
            }
            "div" => {
                want(2)?;
                GateKind::Div(r(0)?, r(1)?)
            }
            "exp" => {
                want(1)?;
                GateKind::Exp(r(0)?)
            }
            "ln" => {
                want(1)?;
                GateKind::Ln(r(0)?)
            }
            op => return Err(syn(ln, &format!("unknown operation `{op}`"))),
        };
        c.push(g);
    }
    c.outputs = outputs.ok_or_else(|| syn(text.lines().count().max(1), "missing `outputs` line"))?;
    Ok(c)
}
