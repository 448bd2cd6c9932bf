//! Numeric literals: exact decimal and `p/q` forms.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralError(pub String);

impl fmt::Display for LiteralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed numeric literal `{}`", self.0)
    }
}

impl std::error::Error for LiteralError {}

fn digits_only(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Parses `[+-]d+[.d*][e[+-]d+]`, `[+-].d+[...]`, or `[+-]p/q` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, LiteralError> {
    let err = || LiteralError(s.to_string());
    let (neg, body) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let q = if let Some((p, d)) = body.split_once('/') {
        if !digits_only(p) || !digits_only(d) {
            return Err(err());
        }
        let den: BigInt = d.parse().map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        BigRational::new(p.parse().map_err(|_| err())?, den)
    } else {
        let (mant, exp) = match body.find(['e', 'E']) {
            Some(i) => {
                let e = &body[i + 1..];
                let (en, ed) = match e.as_bytes().first() {
                    Some(b'-') => (true, &e[1..]),
                    Some(b'+') => (false, &e[1..]),
                    _ => (false, e),
                };
                if !digits_only(ed) || ed.len() > 6 {
                    return Err(err());
                }
                let v: i64 = ed.parse().map_err(|_| err())?;
                (&body[..i], if en { -v } else { v })
            }
            None => (body, 0),
        };
        let (ip, fp) = match mant.split_once('.') {
            Some((a, b)) => (a, b),
            None => (mant, ""),
        };
        if (ip.is_empty() && fp.is_empty())
            || (!ip.is_empty() && !digits_only(ip))
            || (!fp.is_empty() && !digits_only(fp))
        {
            return Err(err());
        }
        let all = format!("{ip}{fp}");
        let n: BigInt = all.parse().map_err(|_| err())?;
        let scale = exp - fp.len() as i64;
        let ten = BigInt::from(10);
        if scale >= 0 {
            BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
        }
    };
    Ok(if neg { -q } else { q })
}

/// Nearest f64 to the literal.
pub fn literal_to_f64(s: &str) -> Result<f64, LiteralError> {
    if s.contains('/') {
        let q = parse_rational(s)?;
        return Ok(rational_to_f64(&q));
    }
    parse_rational(s)?;
    s.parse::<f64>().map_err(|_| LiteralError(s.to_string()))
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or_else(|| if q.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

/// Exact literal for `q`: an integer, a terminating decimal, or `p/q`.
pub fn format_exact(q: &BigRational) -> String {
    if q.is_integer() {
        return q.numer().to_string();
    }
    let mut d = q.denom().clone();
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let (mut a, mut b) = (0usize, 0usize);
    while d.is_even() {
        d /= &two;
        a += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        b += 1;
    }
    if !d.is_one() || a.max(b) > 64 {
        return format!("{}/{}", q.numer(), q.denom());
    }
    let k = a.max(b);
    let scaled = q * BigRational::from_integer(num_traits::pow(BigInt::from(10), k));
    let n = scaled.to_integer();
    let neg = n.is_negative();
    let mut digits = n.abs().to_string();
    if digits.len() <= k {
        digits = format!("{}{}", "0".repeat(k + 1 - digits.len()), digits);
    }
    let (ip, fp) = digits.split_at(digits.len() - k);
    format!("{}{}.{}", if neg { "-" } else { "" }, ip, fp)
}

/// Scientific notation with `sig` significant digits, rounded half-up in magnitude.
pub fn format_rational_sig(q: &BigRational, sig: usize) -> String {
    if q.is_zero() {
        return "0".to_string();
    }
    let sig = sig.max(1);
    let neg = q.is_negative();
    let a = q.abs();
    let ten = BigRational::from_integer(BigInt::from(10));
    // estimate the decimal exponent from digit counts, then correct
    let mut e = a.numer().to_string().len() as i64 - a.denom().to_string().len() as i64;
    let pow10 = |k: i64| -> BigRational {
        if k >= 0 {
            BigRational::from_integer(num_traits::pow(BigInt::from(10), k as usize))
        } else {
            BigRational::new(BigInt::one(), num_traits::pow(BigInt::from(10), (-k) as usize))
        }
    };
    while a >= pow10(e) {
        e += 1;
    }
    while a < pow10(e - 1) {
        e -= 1;
    }
    // a in [10^(e-1), 10^e)
    let scaled = &a * pow10(sig as i64 - e);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut n = (scaled + half).floor().to_integer();
    let mut exp10 = e - 1;
    if n.to_string().len() > sig {
        n /= BigInt::from(10);
        exp10 += 1;
    }
    let _ = ten;
    let s = n.to_string();
    let (h, t) = s.split_at(1);
    let t = t.trim_end_matches('0');
    let mant = if t.is_empty() { h.to_string() } else { format!("{h}.{t}") };
    let sign = if neg { "-" } else { "" };
    if exp10 == 0 {
        format!("{sign}{mant}")
    } else {
        format!("{sign}{mant}e{exp10}")
    }
}
