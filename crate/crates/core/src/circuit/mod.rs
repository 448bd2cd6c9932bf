//! Extended arithmetic circuits: straight-line programs over
//! `{const, input, add, sub, mul, div, exp, ln}`.

mod builder;
mod eval;
pub(crate) mod fold;
mod text;

use std::fmt;
use std::ops::Deref;

use num_rational::BigRational;

use crate::literal;
use crate::scalar::NumericMode;

pub use builder::{BuildError, Builder, Val};
pub use eval::{evaluate, evaluate_batch, evaluate_with, EvalError, EvalTrace};
pub use fold::{constant_fold, constant_fold_with, FoldError};
pub use text::{parse, serialize, ParseError};

/// One gate. Operands are indices of earlier gates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GateKind {
    Const(String),
    Input(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Exp(usize),
    Ln(usize),
}

impl GateKind {
    pub fn operands(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            GateKind::Const(_) | GateKind::Input(_) => (None, None),
            GateKind::Add(a, b) | GateKind::Sub(a, b) | GateKind::Mul(a, b) | GateKind::Div(a, b) => {
                (Some(a), Some(b))
            }
            GateKind::Exp(a) | GateKind::Ln(a) => (Some(a), None),
        };
        a.into_iter().chain(b)
    }

    pub fn is_operation(&self) -> bool {
        !matches!(self, GateKind::Const(_) | GateKind::Input(_))
    }

    pub fn is_transcendental(&self) -> bool {
        matches!(self, GateKind::Exp(_) | GateKind::Ln(_))
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            GateKind::Const(_) => "const",
            GateKind::Input(_) => "input",
            GateKind::Add(..) => "add",
            GateKind::Sub(..) => "sub",
            GateKind::Mul(..) => "mul",
            GateKind::Div(..) => "div",
            GateKind::Exp(_) => "exp",
            GateKind::Ln(_) => "ln",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Circuit {
    pub input_arity: usize,
    pub gates: Vec<GateKind>,
    pub outputs: Vec<usize>,
}

/// Per-mnemonic gate counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub constants: usize,
    pub inputs: usize,
    pub add: usize,
    pub sub: usize,
    pub mul: usize,
    pub div: usize,
    pub exp: usize,
    pub ln: usize,
}

impl Circuit {
    pub fn new(input_arity: usize) -> Self {
        Circuit { input_arity, gates: Vec::new(), outputs: Vec::new() }
    }

    pub fn push(&mut self, g: GateKind) -> usize {
        self.gates.push(g);
        self.gates.len() - 1
    }

    /// Number of operation gates; constants and inputs are not counted.
    pub fn size(&self) -> usize {
        self.gates.iter().filter(|g| g.is_operation()).count()
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g {
                GateKind::Const(_) => c.constants += 1,
                GateKind::Input(_) => c.inputs += 1,
                GateKind::Add(..) => c.add += 1,
                GateKind::Sub(..) => c.sub += 1,
                GateKind::Mul(..) => c.mul += 1,
                GateKind::Div(..) => c.div += 1,
                GateKind::Exp(_) => c.exp += 1,
                GateKind::Ln(_) => c.ln += 1,
            }
        }
        c
    }

    /// `true` at gates whose value depends on some input.
    pub fn input_dependence(&self) -> Vec<bool> {
        let mut dep = vec![false; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            dep[i] = matches!(g, GateKind::Input(_)) || g.operands().any(|o| o < i && dep[o]);
        }
        dep
    }

    /// `true` at gates some output depends on.
    pub fn reachable(&self) -> Vec<bool> {
        let mut live = vec![false; self.gates.len()];
        for &o in &self.outputs {
            if o < live.len() {
                live[o] = true;
            }
        }
        for i in (0..self.gates.len()).rev() {
            if live[i] {
                for o in self.gates[i].operands() {
                    if o < i {
                        live[o] = true;
                    }
                }
            }
        }
        live
    }

    pub fn validate(self) -> Result<ValidatedCircuit, ValidationError> {
        for (i, g) in self.gates.iter().enumerate() {
            for o in g.operands() {
                if o >= i {
                    return Err(ValidationError::ForwardReference { gate: i, operand: o });
                }
            }
            match g {
                GateKind::Input(k) if *k >= self.input_arity => {
                    return Err(ValidationError::BadInputIndex { gate: i, index: *k })
                }
                GateKind::Const(s) => {
                    if literal::parse_rational(s).is_err() {
                        return Err(ValidationError::BadLiteral { gate: i, literal: s.clone() });
                    }
                }
                _ => {}
            }
        }
        for (p, &o) in self.outputs.iter().enumerate() {
            if o >= self.gates.len() {
                return Err(ValidationError::BadOutputIndex { position: p, index: o });
            }
        }
        let constants = self
            .gates
            .iter()
            .map(|g| match g {
                GateKind::Const(s) => literal::parse_rational(s).ok(),
                _ => None,
            })
            .collect();
        Ok(ValidatedCircuit { circuit: self, constants })
    }

    /// Strips gates no output depends on, renumbering the rest.
    pub fn prune(&self) -> Circuit {
        let live = self.reachable();
        let mut map = vec![usize::MAX; self.gates.len()];
        let mut out = Circuit::new(self.input_arity);
        for (i, g) in self.gates.iter().enumerate() {
            if !live[i] {
                continue;
            }
            let r = |k: usize| map[k];
            let ng = match g {
                GateKind::Const(s) => GateKind::Const(s.clone()),
                GateKind::Input(k) => GateKind::Input(*k),
                GateKind::Add(a, b) => GateKind::Add(r(*a), r(*b)),
                GateKind::Sub(a, b) => GateKind::Sub(r(*a), r(*b)),
                GateKind::Mul(a, b) => GateKind::Mul(r(*a), r(*b)),
                GateKind::Div(a, b) => GateKind::Div(r(*a), r(*b)),
                GateKind::Exp(a) => GateKind::Exp(r(*a)),
                GateKind::Ln(a) => GateKind::Ln(r(*a)),
            };
            map[i] = out.push(ng);
        }
        out.outputs = self.outputs.iter().map(|&o| map[o]).collect();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    ForwardReference { gate: usize, operand: usize },
    BadInputIndex { gate: usize, index: usize },
    BadOutputIndex { position: usize, index: usize },
    BadLiteral { gate: usize, literal: String },
    /// Rational mode cannot evaluate exp or ln of an input-dependent value.
    VariableTranscendental { gate: usize },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::ForwardReference { gate, operand } => {
                write!(f, "forward reference at g{gate}: operand g{operand}")
            }
            ValidationError::BadInputIndex { gate, index } => write!(f, "bad input index {index} at g{gate}"),
            ValidationError::BadOutputIndex { position, index } => {
                write!(f, "output {position} refers to missing gate g{index}")
            }
            ValidationError::BadLiteral { gate, literal } => write!(f, "bad constant `{literal}` at g{gate}"),
            ValidationError::VariableTranscendental { gate } => {
                write!(f, "g{gate}: exp/ln of an input-dependent value is not allowed in rational mode")
            }
        }
    }
}

impl std::error::Error for ValidationError {}

/// A circuit whose ordering, operand ranges, outputs, and literals are known good.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedCircuit {
    circuit: Circuit,
    constants: Vec<Option<BigRational>>,
}

impl ValidatedCircuit {
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn into_inner(self) -> Circuit {
        self.circuit
    }

    /// Parsed value of the constant at gate `i`.
    pub fn constant(&self, i: usize) -> Option<&BigRational> {
        self.constants[i].as_ref()
    }

    /// First reachable exp/ln gate with an input-dependent operand.
    pub fn variable_transcendental(&self) -> Option<usize> {
        let dep = self.circuit.input_dependence();
        let live = self.circuit.reachable();
        self.circuit.gates.iter().enumerate().find_map(|(i, g)| match g {
            GateKind::Exp(a) | GateKind::Ln(a) if live[i] && dep[*a] => Some(i),
            _ => None,
        })
    }

    /// Checks the extra restrictions of `mode`.
    pub fn check_mode(&self, mode: NumericMode) -> Result<(), ValidationError> {
        if mode == NumericMode::Rational {
            if let Some(gate) = self.variable_transcendental() {
                return Err(ValidationError::VariableTranscendental { gate });
            }
        }
        Ok(())
    }
}

impl Deref for ValidatedCircuit {
    type Target = Circuit;

    fn deref(&self) -> &Circuit {
        &self.circuit
    }
}
