//! Gate-by-gate evaluation in any numeric mode.

use std::fmt;

use num_rational::BigRational;

use super::{GateKind, ValidatedCircuit, ValidationError};
use crate::bigfloat::Big;
use crate::par;
use crate::scalar::{NumError, NumericMode, Prec, Scalar, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace<T> {
    pub values: Vec<T>,
    pub outputs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    ArityMismatch { expected: usize, got: usize },
    DivisionByZero(usize),
    LnNonPositive(usize),
    Overflow(usize, NumericMode),
    Rejected(ValidationError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::ArityMismatch { expected, got } => write!(f, "expected {expected} inputs, got {got}"),
            EvalError::DivisionByZero(g) => write!(f, "division by zero at g{g}"),
            EvalError::LnNonPositive(g) => write!(f, "ln of a non-positive value at g{g}"),
            EvalError::Overflow(g, m) => write!(f, "overflow at g{g} in mode {m}"),
            EvalError::Rejected(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EvalError {}

fn lift(gate: usize, e: NumError, mode: NumericMode) -> EvalError {
    match e {
        NumError::DivisionByZero => EvalError::DivisionByZero(gate),
        NumError::LnNonPositive => EvalError::LnNonPositive(gate),
        NumError::Overflow | NumError::NonFinite => EvalError::Overflow(gate, mode),
    }
}

/// Evaluates every gate in order.
pub fn evaluate_with<T: Scalar>(
    c: &ValidatedCircuit,
    inputs: &[T],
    ctx: T::Ctx,
) -> Result<EvalTrace<T>, EvalError> {
    if inputs.len() != c.input_arity {
        return Err(EvalError::ArityMismatch { expected: c.input_arity, got: inputs.len() });
    }
    if T::is_exact() {
        c.check_mode(NumericMode::Rational).map_err(EvalError::Rejected)?;
    }
    let mut v: Vec<T> = Vec::with_capacity(c.gates.len());
    for (i, g) in c.gates.iter().enumerate() {
        let r = match g {
            GateKind::Const(_) => Ok(T::from_rational(c.constant(i).expect("validated literal"), ctx)),
            GateKind::Input(k) => Ok(inputs[*k].clone()),
            GateKind::Add(a, b) => v[*a].add(&v[*b]).check_finite(),
            GateKind::Sub(a, b) => v[*a].sub(&v[*b]).check_finite(),
            GateKind::Mul(a, b) => v[*a].mul(&v[*b]).check_finite(),
            GateKind::Div(a, b) => v[*a].div(&v[*b]),
            GateKind::Exp(a) => v[*a].exp(),
            GateKind::Ln(a) => v[*a].ln(),
        };
        v.push(r.map_err(|e| lift(i, e, T::mode(ctx)))?);
    }
    let outputs = c.outputs.iter().map(|&o| v[o].clone()).collect();
    Ok(EvalTrace { values: v, outputs })
}

/// Evaluates with exact rational inputs converted into `mode`.
pub fn evaluate(c: &ValidatedCircuit, inputs: &[BigRational], mode: NumericMode) -> Result<EvalTrace<Value>, EvalError> {
    c.check_mode(mode).map_err(EvalError::Rejected)?;
    fn wrap<T: Scalar>(t: EvalTrace<T>, f: impl Fn(T) -> Value) -> EvalTrace<Value> {
        EvalTrace {
            values: t.values.into_iter().map(&f).collect(),
            outputs: t.outputs.into_iter().map(&f).collect(),
        }
    }
    match mode {
        NumericMode::Float64 => {
            let xs: Vec<f64> = inputs.iter().map(|q| f64::from_rational(q, ())).collect();
            evaluate_with(c, &xs, ()).map(|t| wrap(t, Value::F64))
        }
        NumericMode::BigFloat(bits) => {
            let p = Prec(bits);
            let xs: Vec<Big> = inputs.iter().map(|q| Big::from_rational(q, bits)).collect();
            evaluate_with(c, &xs, p).map(|t| wrap(t, Value::Big))
        }
        NumericMode::Rational => evaluate_with(c, inputs, ()).map(|t| wrap(t, Value::Rat)),
    }
}

/// Evaluates independent input vectors, in parallel when enabled.
pub fn evaluate_batch<T: Scalar>(
    c: &ValidatedCircuit,
    batch: &[Vec<T>],
    ctx: T::Ctx,
) -> Vec<Result<Vec<T>, EvalError>> {
    par::map(batch, |xs| evaluate_with(c, xs, ctx).map(|t| t.outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use num_bigint::BigInt;
    use GateKind::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn exp_ln_round_trip() {
        let c = Circuit { input_arity: 1, gates: vec![Input(0), Ln(0), Exp(1)], outputs: vec![2] }
            .validate()
            .unwrap();
        let t = evaluate_with(&c, &[2.0f64], ()).unwrap();
        assert!((t.outputs[0] - 2.0).abs() < 1e-15);
        assert_eq!(t.values.len(), 3);
        let b = evaluate(&c, &[q(2)], NumericMode::BigFloat(256)).unwrap();
        assert!((b.outputs[0].to_f64() - 2.0).abs() < 1e-15);
        assert!(matches!(
            evaluate(&c, &[q(2)], NumericMode::Rational),
            Err(EvalError::Rejected(ValidationError::VariableTranscendental { gate: 1 }))
        ));
    }

    #[test]
    fn polynomial() {
        let c = Circuit {
            input_arity: 3,
            gates: vec![Input(0), Input(1), Input(2), Mul(0, 1), Add(3, 2)],
            outputs: vec![4],
        }
        .validate()
        .unwrap();
        let t = evaluate(&c, &[q(2), q(3), q(4)], NumericMode::Rational).unwrap();
        assert_eq!(t.outputs[0].render(), "10");
        let t = evaluate(&c, &[q(2), q(3), q(4)], NumericMode::Float64).unwrap();
        assert_eq!(t.outputs[0].to_f64(), 10.0);
    }

    #[test]
    fn domain_errors() {
        let c = Circuit { input_arity: 1, gates: vec![Input(0), Div(0, 0), Ln(0)], outputs: vec![1] }
            .validate()
            .unwrap();
        assert_eq!(evaluate_with(&c, &[0.0f64], ()), Err(EvalError::DivisionByZero(1)));
        assert_eq!(evaluate_with(&c, &[-1.0f64], ()), Err(EvalError::LnNonPositive(2)));
        let e = Circuit { input_arity: 1, gates: vec![Input(0), Exp(0)], outputs: vec![1] }.validate().unwrap();
        assert_eq!(evaluate_with(&e, &[1000.0f64], ()), Err(EvalError::Overflow(1, NumericMode::Float64)));
        assert!(evaluate(&e, &[q(1000)], NumericMode::BigFloat(128)).is_ok());
        assert_eq!(evaluate_with::<f64>(&e, &[], ()), Err(EvalError::ArityMismatch { expected: 1, got: 0 }));
    }

    #[test]
    fn batch_matches_single() {
        let c = Circuit { input_arity: 1, gates: vec![Input(0), Mul(0, 0)], outputs: vec![1] }.validate().unwrap();
        let batch: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let out = evaluate_batch(&c, &batch, ());
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap()[0], (i * i) as f64);
        }
    }
}
