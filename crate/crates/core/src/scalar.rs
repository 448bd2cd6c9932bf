//! Numeric modes and the scalar abstraction shared by every evaluator.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::bigfloat::{self, Big};
use crate::literal;

/// Arithmetic failures raised instead of producing NaN or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumError {
    DivisionByZero,
    LnNonPositive,
    Overflow,
    NonFinite,
}

impl fmt::Display for NumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NumError::DivisionByZero => "division by zero",
            NumError::LnNonPositive => "logarithm of a non-positive value",
            NumError::Overflow => "overflow",
            NumError::NonFinite => "non-finite value",
        })
    }
}

impl std::error::Error for NumError {}

/// The three evaluation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericMode {
    Float64,
    BigFloat(usize),
    Rational,
}

impl NumericMode {
    pub fn bigfloat_default() -> Self {
        NumericMode::BigFloat(bigfloat::default_precision())
    }
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericMode::Float64 => f.write_str("f64"),
            NumericMode::BigFloat(b) => write!(f, "bigfloat:{b}"),
            NumericMode::Rational => f.write_str("rational"),
        }
    }
}

impl std::str::FromStr for NumericMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f64" | "float64" => Ok(NumericMode::Float64),
            "rational" => Ok(NumericMode::Rational),
            "bigfloat" => Ok(NumericMode::bigfloat_default()),
            _ => match s.strip_prefix("bigfloat:") {
                Some(b) => b
                    .parse::<usize>()
                    .ok()
                    .filter(|&b| b >= 64)
                    .map(NumericMode::BigFloat)
                    .ok_or_else(|| format!("bad mantissa width in `{s}`")),
                None => Err(format!("unknown mode `{s}`")),
            },
        }
    }
}

/// A field-like scalar with exp and ln.
///
/// `Ctx` carries what a constructor needs (the mantissa width for big floats).
pub trait Scalar: Clone + fmt::Debug + Send + Sync + 'static {
    type Ctx: Copy + fmt::Debug + Send + Sync;

    fn from_rational(q: &BigRational, ctx: Self::Ctx) -> Self;
    fn from_f64(v: f64, ctx: Self::Ctx) -> Self;
    fn to_f64(&self) -> f64;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div(&self, o: &Self) -> Result<Self, NumError>;
    fn exp(&self) -> Result<Self, NumError>;
    fn ln(&self) -> Result<Self, NumError>;

    fn is_zero_value(&self) -> bool;
    fn compare(&self, o: &Self) -> Ordering;
    /// True when arithmetic is exact.
    fn is_exact() -> bool;
    fn check_finite(self) -> Result<Self, NumError>;
    fn mode(ctx: Self::Ctx) -> NumericMode;

    fn from_i64(v: i64, ctx: Self::Ctx) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(v)), ctx)
    }
    fn zero_with(ctx: Self::Ctx) -> Self {
        Self::from_i64(0, ctx)
    }
    fn one_with(ctx: Self::Ctx) -> Self {
        Self::from_i64(1, ctx)
    }
    fn parse_literal(s: &str, ctx: Self::Ctx) -> Result<Self, literal::LiteralError> {
        literal::parse_rational(s).map(|q| Self::from_rational(&q, ctx))
    }
    fn magnitude(&self) -> Self {
        if self.is_neg() {
            self.neg()
        } else {
            self.clone()
        }
    }
    fn is_neg(&self) -> bool {
        self.compare(&self.sub(self)) == Ordering::Less
    }
    fn max_of<'a>(&'a self, o: &'a Self) -> &'a Self {
        if o.compare(self) == Ordering::Greater {
            o
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    type Ctx = ();

    fn from_rational(q: &BigRational, _: ()) -> f64 {
        literal::rational_to_f64(q)
    }
    fn from_f64(v: f64, _: ()) -> f64 {
        v
    }
    fn from_i64(v: i64, _: ()) -> f64 {
        v as f64
    }
    fn parse_literal(s: &str, _: ()) -> Result<f64, literal::LiteralError> {
        literal::literal_to_f64(s)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &f64) -> f64 {
        self + o
    }
    fn sub(&self, o: &f64) -> f64 {
        self - o
    }
    fn mul(&self, o: &f64) -> f64 {
        self * o
    }
    fn neg(&self) -> f64 {
        -self
    }
    fn div(&self, o: &f64) -> Result<f64, NumError> {
        if *o == 0.0 {
            Err(NumError::DivisionByZero)
        } else {
            (self / o).check_finite()
        }
    }
    fn exp(&self) -> Result<f64, NumError> {
        let v = f64::exp(*self);
        if v.is_infinite() {
            Err(NumError::Overflow)
        } else {
            v.check_finite()
        }
    }
    fn ln(&self) -> Result<f64, NumError> {
        if *self > 0.0 {
            Ok(f64::ln(*self))
        } else {
            Err(NumError::LnNonPositive)
        }
    }
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
    fn compare(&self, o: &f64) -> Ordering {
        self.partial_cmp(o).unwrap_or(Ordering::Equal)
    }
    fn is_exact() -> bool {
        false
    }
    fn check_finite(self) -> Result<f64, NumError> {
        if self.is_finite() {
            Ok(self)
        } else if self.is_infinite() {
            Err(NumError::Overflow)
        } else {
            Err(NumError::NonFinite)
        }
    }
    fn is_neg(&self) -> bool {
        *self < 0.0
    }
    fn mode(_: ()) -> NumericMode {
        NumericMode::Float64
    }
}

/// Mantissa width in bits for [`Big`] constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prec(pub usize);

impl Default for Prec {
    fn default() -> Self {
        Prec(bigfloat::default_precision())
    }
}

impl Scalar for Big {
    type Ctx = Prec;

    fn from_rational(q: &BigRational, p: Prec) -> Big {
        Big::from_rational(q, p.0)
    }
    fn from_f64(v: f64, p: Prec) -> Big {
        Big::from_f64(v, p.0).with_precision(p.0.max(64))
    }
    fn from_i64(v: i64, p: Prec) -> Big {
        Big::from_i64(v, p.0)
    }
    fn to_f64(&self) -> f64 {
        Big::to_f64(self)
    }
    fn add(&self, o: &Big) -> Big {
        Big::add(self, o)
    }
    fn sub(&self, o: &Big) -> Big {
        Big::sub(self, o)
    }
    fn mul(&self, o: &Big) -> Big {
        Big::mul(self, o)
    }
    fn neg(&self) -> Big {
        Big::neg(self)
    }
    fn div(&self, o: &Big) -> Result<Big, NumError> {
        Big::div(self, o).ok_or(NumError::DivisionByZero)?.check_finite()
    }
    fn exp(&self) -> Result<Big, NumError> {
        Big::exp(self).check_finite()
    }
    fn ln(&self) -> Result<Big, NumError> {
        Big::ln(self).ok_or(NumError::LnNonPositive)
    }
    fn is_zero_value(&self) -> bool {
        Big::is_zero(self)
    }
    fn compare(&self, o: &Big) -> Ordering {
        self.partial_cmp(o).unwrap_or(Ordering::Equal)
    }
    fn is_exact() -> bool {
        false
    }
    fn check_finite(self) -> Result<Big, NumError> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(NumError::Overflow)
        }
    }
    fn is_neg(&self) -> bool {
        Big::is_negative(self)
    }
    fn mode(p: Prec) -> NumericMode {
        NumericMode::BigFloat(p.0)
    }
}

/// Bits used when a rational exp or ln has no exact value.
pub const RATIONAL_TRANSCENDENTAL_BITS: usize = 320;

impl Scalar for BigRational {
    type Ctx = ();

    fn from_rational(q: &BigRational, _: ()) -> BigRational {
        q.clone()
    }
    fn from_f64(v: f64, _: ()) -> BigRational {
        BigRational::from_float(v).unwrap_or_else(<BigRational as Zero>::zero)
    }
    fn to_f64(&self) -> f64 {
        literal::rational_to_f64(self)
    }
    fn add(&self, o: &BigRational) -> BigRational {
        self + o
    }
    fn sub(&self, o: &BigRational) -> BigRational {
        self - o
    }
    fn mul(&self, o: &BigRational) -> BigRational {
        self * o
    }
    fn neg(&self) -> BigRational {
        -self
    }
    fn div(&self, o: &BigRational) -> Result<BigRational, NumError> {
        if Zero::is_zero(o) {
            Err(NumError::DivisionByZero)
        } else {
            Ok(self / o)
        }
    }
    /// Exact at 0; otherwise the rational value of a 320-bit float result.
    fn exp(&self) -> Result<BigRational, NumError> {
        if Zero::is_zero(self) {
            return Ok(<BigRational as One>::one());
        }
        let v = Big::from_rational(self, RATIONAL_TRANSCENDENTAL_BITS).exp().check_finite()?;
        Ok(v.to_rational())
    }
    /// Exact at 1; otherwise the rational value of a 320-bit float result.
    fn ln(&self) -> Result<BigRational, NumError> {
        if !self.is_positive() {
            return Err(NumError::LnNonPositive);
        }
        if self.is_one() {
            return Ok(<BigRational as Zero>::zero());
        }
        let v = Big::from_rational(self, RATIONAL_TRANSCENDENTAL_BITS).ln().ok_or(NumError::LnNonPositive)?;
        Ok(v.to_rational())
    }
    fn is_zero_value(&self) -> bool {
        Zero::is_zero(self)
    }
    fn compare(&self, o: &BigRational) -> Ordering {
        self.cmp(o)
    }
    fn is_exact() -> bool {
        true
    }
    fn check_finite(self) -> Result<BigRational, NumError> {
        Ok(self)
    }
    fn is_neg(&self) -> bool {
        Signed::is_negative(self)
    }
    fn mode(_: ()) -> NumericMode {
        NumericMode::Rational
    }
}

/// A scalar tagged with its mode.
#[derive(Debug, Clone)]
pub enum Value {
    F64(f64),
    Big(Big),
    Rat(BigRational),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::F64(v) => *v,
            Value::Big(v) => v.to_f64(),
            Value::Rat(v) => literal::rational_to_f64(v),
        }
    }

    /// Text form: shortest round-trip for f64, 40 significant digits for big floats, exact for rationals.
    pub fn render(&self) -> String {
        match self {
            Value::F64(v) => format!("{v:?}"),
            Value::Big(v) => v.to_decimal(((v.precision() as f64) * std::f64::consts::LOG10_2).floor().max(1.0) as usize),
            Value::Rat(v) => literal::format_exact(v),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
