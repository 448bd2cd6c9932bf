//! Constant folding.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::{Circuit, GateKind, ValidatedCircuit};
use crate::bigfloat::{self, Big};
use crate::literal;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldError {
    LnNonPositive(usize),
    DivisionByZero(usize),
}

impl fmt::Display for FoldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FoldError::LnNonPositive(g) => write!(f, "ln of a non-positive constant at g{g}"),
            FoldError::DivisionByZero(g) => write!(f, "division by constant zero at g{g}"),
        }
    }
}

impl std::error::Error for FoldError {}

/// Folds at the default big-float precision.
pub fn constant_fold(c: &ValidatedCircuit) -> Result<Circuit, FoldError> {
    constant_fold_with(c, bigfloat::default_precision())
}

/// Decimal digits kept when a transcendental constant is written out.
pub(crate) fn digits_for(prec: usize) -> usize {
    (prec as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
}

/// exp of a constant: exact at 0, else rounded to a decimal literal.
pub(crate) fn exp_const(q: &BigRational, prec: usize) -> (BigRational, String) {
    if q.is_zero() {
        return (BigRational::one(), "1".into());
    }
    decimal(Big::from_rational(q, prec).exp(), prec)
}

/// ln of a positive constant: exact at 1, else rounded to a decimal literal.
pub(crate) fn ln_const(q: &BigRational, prec: usize) -> Option<(BigRational, String)> {
    if !q.is_positive() {
        return None;
    }
    if q.is_one() {
        return Some((BigRational::zero(), "0".into()));
    }
    Big::from_rational(q, prec).ln().map(|v| decimal(v, prec))
}

fn decimal(v: Big, prec: usize) -> (BigRational, String) {
    let s = literal::format_rational_sig(&v.to_rational(), digits_for(prec));
    let q = literal::parse_rational(&s).expect("formatted literal parses");
    (q, s)
}

/// Replaces every gate whose operands are all constant with a `Const` gate.
///
/// Gate positions are unchanged; exact arithmetic is used for `+ - × /`.
pub fn constant_fold_with(c: &ValidatedCircuit, prec: usize) -> Result<Circuit, FoldError> {
    let mut out = c.circuit().clone();
    let mut val: Vec<Option<BigRational>> = Vec::with_capacity(c.gates.len());
    for (i, g) in c.gates.iter().enumerate() {
        let both = |a: usize, b: usize| match (&val[a], &val[b]) {
            (Some(x), Some(y)) => Some((x.clone(), y.clone())),
            _ => None,
        };
        let folded: Option<(BigRational, String)> = match g {
            GateKind::Const(_) => {
                val.push(c.constant(i).cloned());
                continue;
            }
            GateKind::Input(_) => None,
            GateKind::Add(a, b) => both(*a, *b).map(|(x, y)| exact(x + y)),
            GateKind::Sub(a, b) => both(*a, *b).map(|(x, y)| exact(x - y)),
            GateKind::Mul(a, b) => both(*a, *b).map(|(x, y)| exact(x * y)),
            GateKind::Div(a, b) => match both(*a, *b) {
                Some((_, y)) if y.is_zero() => return Err(FoldError::DivisionByZero(i)),
                Some((x, y)) => Some(exact(x / y)),
                None => None,
            },
            GateKind::Exp(a) => val[*a].as_ref().map(|x| exp_const(x, prec)),
            GateKind::Ln(a) => match &val[*a] {
                Some(x) => Some(ln_const(x, prec).ok_or(FoldError::LnNonPositive(i))?),
                None => None,
            },
        };
        match folded {
            Some((q, s)) => {
                out.gates[i] = GateKind::Const(s);
                val.push(Some(q));
            }
            None => val.push(None),
        }
    }
    Ok(out)
}

fn exact(q: BigRational) -> (BigRational, String) {
    let s = literal::format_exact(&q);
    (q, s)
}
