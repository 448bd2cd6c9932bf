//! Arbitrary-precision binary floating point.
//!
//! A thin newtype over `astro_float::BigFloat` that carries its own
//! precision, rounds to nearest-even, and reports non-finite results.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode, Sign, WORD_BIT_SIZE};
use num_bigint::{BigInt, BigUint, Sign as IntSign};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Default mantissa width in bits.
pub const DEFAULT_PRECISION: usize = 256;

/// Environment variable overriding [`DEFAULT_PRECISION`].
pub const PRECISION_ENV: &str = "EACLAB_PRECISION";

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constant cache"));
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// Precision from `EACLAB_PRECISION`, or 256 bits.
pub fn default_precision() -> usize {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&p| p >= 64)
        .unwrap_or(DEFAULT_PRECISION)
}

/// A finite binary float with an explicit mantissa width.
#[derive(Clone)]
pub struct Big(BigFloat);

impl Big {
    pub fn zero(prec: usize) -> Self {
        Big(BigFloat::from_word(0, prec))
    }

    pub fn one(prec: usize) -> Self {
        Big(BigFloat::from_word(1, prec))
    }

    pub fn from_i64(v: i64, prec: usize) -> Self {
        Big(BigFloat::from_i64(v, prec))
    }

    /// Exact conversion (the mantissa is widened to at least 64 bits).
    pub fn from_f64(v: f64, prec: usize) -> Self {
        Big(BigFloat::from_f64(v, prec.max(64)))
    }

    fn from_biguint_exact(v: &BigUint) -> BigFloat {
        let digits = v.to_u64_digits();
        let bits = (digits.len().max(1) * 64).max(64);
        let base = BigFloat::from_u64(1 << 32, bits).mul(&BigFloat::from_u64(1 << 32, bits), bits, RM);
        let mut acc = BigFloat::from_word(0, bits);
        for d in digits.iter().rev() {
            acc = acc.mul(&base, bits, RM).add(&BigFloat::from_u64(*d, bits), bits, RM);
        }
        acc
    }

    /// Nearest value to `q` at precision `prec` (one rounding).
    pub fn from_rational(q: &BigRational, prec: usize) -> Self {
        let num = Self::from_biguint_exact(q.numer().magnitude());
        let den = Self::from_biguint_exact(q.denom().magnitude());
        let mut v = if q.denom().is_one() {
            let mut n = num;
            n.set_precision(prec, RM).expect("precision");
            n
        } else {
            num.div(&den, prec, RM)
        };
        if q.is_negative() {
            v.set_sign(Sign::Neg);
        }
        Big(v)
    }

    /// The exact rational value of this float.
    pub fn to_rational(&self) -> BigRational {
        let (words, _, sign, exp, _) = match self.0.as_raw_parts() {
            Some(p) => p,
            None => return BigRational::zero(),
        };
        if self.0.is_zero() {
            return BigRational::zero();
        }
        let mbits = words.len() * WORD_BIT_SIZE;
        let digits: Vec<u64> = words.iter().map(|w| *w as u64).collect();
        let mant = BigInt::from_biguint(IntSign::Plus, BigUint::new(to_u32_digits(&digits)));
        let shift = exp as i64 - mbits as i64;
        let mut q = if shift >= 0 {
            BigRational::from_integer(mant << (shift as usize))
        } else {
            BigRational::new(mant, BigInt::one() << ((-shift) as usize))
        };
        if sign == Sign::Neg {
            q = -q;
        }
        q
    }

    pub fn to_f64(&self) -> f64 {
        if self.0.is_zero() {
            return 0.0;
        }
        match self.0.as_raw_parts() {
            Some((words, _, sign, exp, _)) => {
                let top = *words.last().expect("mantissa") as u64;
                let next = if words.len() > 1 { words[words.len() - 2] as u64 } else { 0 };
                // top word holds the leading bits; keep 64 bits then scale.
                let hi = top as f64 + (next as f64) / 18446744073709551616.0;
                let v = hi * 2f64.powi(exp - WORD_BIT_SIZE as i32);
                if sign == Sign::Neg {
                    -v
                } else {
                    v
                }
            }
            None => f64::NAN,
        }
    }

    pub fn precision(&self) -> usize {
        self.0.mantissa_max_bit_len().unwrap_or(DEFAULT_PRECISION)
    }

    fn prec2(&self, o: &Big) -> usize {
        self.precision().max(o.precision())
    }

    pub fn add(&self, o: &Big) -> Big {
        Big(self.0.add(&o.0, self.prec2(o), RM))
    }

    pub fn sub(&self, o: &Big) -> Big {
        Big(self.0.sub(&o.0, self.prec2(o), RM))
    }

    pub fn mul(&self, o: &Big) -> Big {
        Big(self.0.mul(&o.0, self.prec2(o), RM))
    }

    /// Quotient; `None` when `o` is zero.
    pub fn div(&self, o: &Big) -> Option<Big> {
        if o.is_zero() {
            return None;
        }
        Some(Big(self.0.div(&o.0, self.prec2(o), RM)))
    }

    pub fn neg(&self) -> Big {
        Big(self.0.neg())
    }

    pub fn abs(&self) -> Big {
        Big(self.0.abs())
    }

    pub fn exp(&self) -> Big {
        let p = self.precision();
        Big(with_consts(|cc| self.0.exp(p, RM, cc)))
    }

    /// Natural logarithm; `None` for non-positive arguments.
    pub fn ln(&self) -> Option<Big> {
        if !self.is_positive() {
            return None;
        }
        let p = self.precision();
        Some(Big(with_consts(|cc| self.0.ln(p, RM, cc))))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        !self.0.is_zero() && self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        !self.0.is_zero() && self.0.is_negative()
    }

    pub fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    /// Rounds to `prec` bits.
    pub fn with_precision(&self, prec: usize) -> Big {
        let mut v = self.0.clone();
        v.set_precision(prec, RM).expect("precision");
        Big(v)
    }

    /// Decimal scientific notation with `digits` significant digits.
    pub fn to_decimal(&self, digits: usize) -> String {
        crate::literal::format_rational_sig(&self.to_rational(), digits)
    }
}

fn to_u32_digits(d: &[u64]) -> Vec<u32> {
    let mut out = Vec::with_capacity(d.len() * 2);
    for w in d {
        out.push(*w as u32);
        out.push((*w >> 32) as u32);
    }
    out
}

impl PartialEq for Big {
    fn eq(&self, o: &Big) -> bool {
        self.partial_cmp(o) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Big {
    fn partial_cmp(&self, o: &Big) -> Option<Ordering> {
        self.0.cmp(&o.0).map(|c| c.cmp(&0))
    }
}

impl fmt::Debug for Big {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal(24))
    }
}

impl fmt::Display for Big {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f.precision().unwrap_or(((self.precision() as f64) * std::f64::consts::LOG10_2) as usize);
        write!(f, "{}", self.to_decimal(digits.max(1)))
    }
}

/// Relative difference `|a - b| / max(|b|, tiny)` as f64.
pub fn rel_diff(a: &Big, b: &Big) -> f64 {
    let d = a.sub(b).abs();
    let s = b.abs();
    if s.is_zero() {
        return d.to_f64();
    }
    d.div(&s).map(|q| q.to_f64()).unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn rational_round_trip_is_exact_for_dyadics() {
        for (n, d) in [(1, 1), (3, 4), (-7, 8), (123456789, 1 << 20), (0, 1)] {
            let v = Big::from_rational(&q(n, d), 256);
            assert_eq!(v.to_rational(), q(n, d));
        }
    }

    #[test]
    fn f64_conversions() {
        for x in [1.0, -2.5, 0.1, 1e300, -3e-200, 0.0] {
            let b = Big::from_f64(x, 256);
            assert_eq!(b.to_f64(), x);
        }
    }

    #[test]
    fn exp_ln_inverse() {
        let two = Big::from_i64(2, 256);
        let back = two.ln().unwrap().exp();
        assert!(rel_diff(&back, &two) < 1e-70);
        assert!(Big::zero(256).ln().is_none());
        assert!(Big::from_i64(-1, 256).ln().is_none());
    }

    #[test]
    fn third_is_close() {
        let t = Big::from_rational(&q(1, 3), 256);
        let err = (t.to_rational() - q(1, 3)) * BigRational::from_integer(BigInt::from(3));
        let e = Big::from_rational(&err, 64).to_f64().abs();
        assert!(e < 1e-76, "{e}");
    }

    #[test]
    fn ordering() {
        let a = Big::from_i64(2, 128);
        let b = Big::from_i64(3, 256);
        assert!(a < b);
        assert_eq!(a.add(&b), Big::from_i64(5, 64));
        assert!(a.div(&Big::zero(64)).is_none());
    }
}
