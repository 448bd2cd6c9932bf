//! A circuit builder that folds exact constants as it goes.

use std::collections::HashMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::{Circuit, GateKind, ValidatedCircuit};
use crate::literal;

/// A compile-time constant or a gate reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Val {
    Const(BigRational),
    Wire(usize),
}

impl Val {
    pub fn zero() -> Val {
        Val::Const(BigRational::zero())
    }

    pub fn one() -> Val {
        Val::Const(BigRational::one())
    }

    pub fn int(v: i64) -> Val {
        Val::Const(BigRational::from_integer(v.into()))
    }

    pub fn as_const(&self) -> Option<&BigRational> {
        match self {
            Val::Const(q) => Some(q),
            Val::Wire(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Val::Const(q) if q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Val::Const(q) if q.is_one())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildError {
    DivisionByZero,
    LnNonPositive,
    InputOutOfRange(usize),
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::DivisionByZero => f.write_str("division by constant zero"),
            BuildError::LnNonPositive => f.write_str("ln of a non-positive constant"),
            BuildError::InputOutOfRange(k) => write!(f, "input {k} out of range"),
        }
    }
}

impl std::error::Error for BuildError {}

#[derive(Debug, Clone)]
pub struct Builder {
    c: Circuit,
    consts: HashMap<BigRational, usize>,
    inputs: HashMap<usize, usize>,
}

impl Builder {
    pub fn new(input_arity: usize) -> Self {
        Builder { c: Circuit::new(input_arity), consts: HashMap::new(), inputs: HashMap::new() }
    }

    pub fn input_arity(&self) -> usize {
        self.c.input_arity
    }

    /// Operation gates emitted so far.
    pub fn size(&self) -> usize {
        self.c.size()
    }

    pub fn input(&mut self, k: usize) -> Val {
        assert!(k < self.c.input_arity, "input {k} out of range");
        if let Some(&g) = self.inputs.get(&k) {
            return Val::Wire(g);
        }
        let g = self.c.push(GateKind::Input(k));
        self.inputs.insert(k, g);
        Val::Wire(g)
    }

    /// Gate index holding `v`, emitting a `Const` gate if needed.
    pub fn wire(&mut self, v: &Val) -> usize {
        match v {
            Val::Wire(g) => *g,
            Val::Const(q) => {
                if let Some(&g) = self.consts.get(q) {
                    return g;
                }
                let g = self.c.push(GateKind::Const(literal::format_exact(q)));
                self.consts.insert(q.clone(), g);
                g
            }
        }
    }

    fn op(&mut self, f: impl FnOnce(usize, usize) -> GateKind, a: &Val, b: &Val) -> Val {
        let (x, y) = (self.wire(a), self.wire(b));
        Val::Wire(self.c.push(f(x, y)))
    }

    pub fn add(&mut self, a: &Val, b: &Val) -> Val {
        match (a, b) {
            (Val::Const(x), Val::Const(y)) => Val::Const(x + y),
            _ if a.is_zero() => b.clone(),
            _ if b.is_zero() => a.clone(),
            _ => self.op(GateKind::Add, a, b),
        }
    }

    pub fn sub(&mut self, a: &Val, b: &Val) -> Val {
        match (a, b) {
            (Val::Const(x), Val::Const(y)) => Val::Const(x - y),
            _ if b.is_zero() => a.clone(),
            _ => self.op(GateKind::Sub, a, b),
        }
    }

    pub fn mul(&mut self, a: &Val, b: &Val) -> Val {
        match (a, b) {
            (Val::Const(x), Val::Const(y)) => Val::Const(x * y),
            _ if a.is_zero() || b.is_zero() => Val::zero(),
            _ if a.is_one() => b.clone(),
            _ if b.is_one() => a.clone(),
            _ => self.op(GateKind::Mul, a, b),
        }
    }

    pub fn div(&mut self, a: &Val, b: &Val) -> Result<Val, BuildError> {
        Ok(match (a, b) {
            (_, Val::Const(y)) if y.is_zero() => return Err(BuildError::DivisionByZero),
            (Val::Const(x), Val::Const(y)) => Val::Const(x / y),
            _ if b.is_one() => a.clone(),
            _ if a.is_zero() => Val::zero(),
            _ => self.op(GateKind::Div, a, b),
        })
    }

    pub fn exp(&mut self, a: &Val) -> Val {
        if a.is_zero() {
            return Val::one();
        }
        let x = self.wire(a);
        Val::Wire(self.c.push(GateKind::Exp(x)))
    }

    pub fn ln(&mut self, a: &Val) -> Result<Val, BuildError> {
        if let Val::Const(q) = a {
            if !q.is_positive() {
                return Err(BuildError::LnNonPositive);
            }
            if q.is_one() {
                return Ok(Val::zero());
            }
        }
        let x = self.wire(a);
        Ok(Val::Wire(self.c.push(GateKind::Ln(x))))
    }

    pub fn neg(&mut self, a: &Val) -> Val {
        self.sub(&Val::zero(), a)
    }

    /// Left-associated sum; zero for an empty iterator.
    pub fn sum<'a>(&mut self, vals: impl IntoIterator<Item = &'a Val>) -> Val {
        let mut acc = Val::zero();
        for v in vals {
            acc = self.add(&acc, v);
        }
        acc
    }

    /// Inlines `c` on `args`, returning its outputs.
    pub fn inline(&mut self, c: &ValidatedCircuit, args: &[Val]) -> Result<Vec<Val>, BuildError> {
        let mut v: Vec<Val> = Vec::with_capacity(c.gates.len());
        for (i, g) in c.gates.iter().enumerate() {
            let r = match g {
                GateKind::Const(_) => Val::Const(c.constant(i).expect("validated").clone()),
                GateKind::Input(k) => args.get(*k).cloned().ok_or(BuildError::InputOutOfRange(*k))?,
                GateKind::Add(a, b) => self.add(&v[*a].clone(), &v[*b].clone()),
                GateKind::Sub(a, b) => self.sub(&v[*a].clone(), &v[*b].clone()),
                GateKind::Mul(a, b) => self.mul(&v[*a].clone(), &v[*b].clone()),
                GateKind::Div(a, b) => self.div(&v[*a].clone(), &v[*b].clone())?,
                GateKind::Exp(a) => self.exp(&v[*a].clone()),
                GateKind::Ln(a) => self.ln(&v[*a].clone())?,
            };
            v.push(r);
        }
        Ok(c.outputs.iter().map(|&o| v[o].clone()).collect())
    }

    pub fn finish(mut self, outputs: &[Val]) -> Circuit {
        let outs: Vec<usize> = outputs.iter().map(|v| self.wire(v)).collect();
        self.c.outputs = outs;
        self.c
    }
}
