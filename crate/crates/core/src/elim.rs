//! Degree-2 elimination: compiles an eAC computing quadratic outputs into a
//! plain arithmetic circuit over `{+, -, ×}`.
//!
//! Every gate is tracked as a truncated series `c0 + c1 z + c2 z²` under the
//! substitution `x_i ← x_i z`. `c0` is a compile-time rational; `c1` and `c2`
//! live in the emitted circuit.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bigfloat::{self, Big};
use crate::circuit::fold::{exp_const, ln_const};
use crate::circuit::{evaluate_with, Builder, Circuit, EvalError, GateKind, ValidatedCircuit, Val};
use crate::scalar::Prec;

/// Which series coefficient each emitted output carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ElimOutput {
    /// `c2`, the homogeneous quadratic part.
    #[default]
    Quadratic,
    Linear,
    Constant,
    /// `c0 + c1 + c2`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub points: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { points: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElimOptions {
    pub output: ElimOutput,
    pub check: Option<CheckOptions>,
    /// Mantissa bits used for exp/ln of constants and for the check.
    pub precision: usize,
}

impl Default for ElimOptions {
    fn default() -> Self {
        ElimOptions { output: ElimOutput::Quadratic, check: None, precision: bigfloat::default_precision() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElimError {
    LnConstantNonPositive(usize),
    DivConstantZero(usize),
    /// The point (as rationals) where `c0 + c1 + c2` and the source disagree.
    QuadraticityCheckFailed(Vec<BigRational>),
    /// The source itself could not be evaluated at a check point.
    CheckEvaluation(EvalError),
}

impl fmt::Display for ElimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElimError::LnConstantNonPositive(g) => write!(f, "g{g}: ln operand has non-positive value at 0"),
            ElimError::DivConstantZero(g) => write!(f, "g{g}: denominator vanishes at 0"),
            ElimError::QuadraticityCheckFailed(p) => {
                let pts: Vec<String> = p.iter().map(crate::literal::format_exact).collect();
                write!(f, "quadraticity check failed at ({})", pts.join(", "))
            }
            ElimError::CheckEvaluation(e) => write!(f, "check evaluation failed: {e}"),
        }
    }
}

impl std::error::Error for ElimError {}

#[derive(Debug, Clone)]
pub struct Elimination {
    pub circuit: Circuit,
    pub source_size: usize,
    /// False when some `c0` needed a rounded exp or ln.
    pub exact: bool,
    pub checked_points: usize,
}

impl Elimination {
    pub fn ratio(&self) -> f64 {
        if self.source_size == 0 {
            0.0
        } else {
            self.circuit.size() as f64 / self.source_size as f64
        }
    }
}

#[derive(Clone)]
struct Series {
    c0: BigRational,
    c1: Val,
    c2: Val,
}

fn k(q: BigRational) -> Val {
    Val::Const(q)
}

fn half() -> BigRational {
    BigRational::new(1.into(), 2.into())
}

struct Lowering<'a> {
    b: Builder,
    src: &'a ValidatedCircuit,
    prec: usize,
    exact: bool,
}

impl Lowering<'_> {
    fn scale(&mut self, q: &BigRational, v: &Val) -> Val {
        self.b.mul(&k(q.clone()), v)
    }

    fn gate(&mut self, i: usize, s: &[Series]) -> Result<Series, ElimError> {
        let z = Val::zero;
        Ok(match &self.src.gates[i] {
            GateKind::Const(_) => Series { c0: self.src.constant(i).expect("validated").clone(), c1: z(), c2: z() },
            GateKind::Input(j) => Series { c0: BigRational::zero(), c1: self.b.input(*j), c2: z() },
            GateKind::Add(a, c) => {
                let (u, v) = (&s[*a], &s[*c]);
                Series { c0: &u.c0 + &v.c0, c1: self.b.add(&u.c1, &v.c1), c2: self.b.add(&u.c2, &v.c2) }
            }
            GateKind::Sub(a, c) => {
                let (u, v) = (&s[*a], &s[*c]);
                Series { c0: &u.c0 - &v.c0, c1: self.b.sub(&u.c1, &v.c1), c2: self.b.sub(&u.c2, &v.c2) }
            }
            GateKind::Mul(a, c) => {
                let (u, v) = (&s[*a], &s[*c]);
                let t1 = self.scale(&u.c0, &v.c1);
                let t2 = self.scale(&v.c0, &u.c1);
                let c1 = self.b.add(&t1, &t2);
                let p = self.scale(&v.c0, &u.c2);
                let q = self.b.mul(&u.c1, &v.c1);
                let r = self.scale(&u.c0, &v.c2);
                let pq = self.b.add(&p, &q);
                let c2 = self.b.add(&pq, &r);
                Series { c0: &u.c0 * &v.c0, c1, c2 }
            }
            GateKind::Div(a, c) => {
                let (u, v) = (&s[*a], &s[*c]);
                if v.c0.is_zero() {
                    return Err(ElimError::DivConstantZero(i));
                }
                let inv = v.c0.recip();
                let u0 = &u.c0 * &inv;
                let u1 = self.scale(&inv, &u.c1);
                let u2 = self.scale(&inv, &u.c2);
                let v1 = self.scale(&inv, &v.c1);
                let v2 = self.scale(&inv, &v.c2);
                // c1 = u1' - u0' v1'
                let t = self.scale(&u0, &v1);
                let c1 = self.b.sub(&u1, &t);
                // c2 = u2' - u1' v1' + u0' (v1'^2 - v2')
                let uv = self.b.mul(&u1, &v1);
                let vv = self.b.mul(&v1, &v1);
                let d = self.b.sub(&vv, &v2);
                let du = self.scale(&u0, &d);
                let a2 = self.b.sub(&u2, &uv);
                let c2 = self.b.add(&a2, &du);
                Series { c0: u0, c1, c2 }
            }
            GateKind::Exp(a) => {
                let u = &s[*a];
                let (e0, _) = exp_const(&u.c0, self.prec);
                self.exact &= u.c0.is_zero();
                let c1 = self.scale(&e0, &u.c1);
                // c2 = e^{u0} (u2 + u1^2 / 2)
                let sq = self.b.mul(&u.c1, &u.c1);
                let hs = self.scale(&half(), &sq);
                let inner = self.b.add(&u.c2, &hs);
                let c2 = self.scale(&e0, &inner);
                Series { c0: e0, c1, c2 }
            }
            GateKind::Ln(a) => {
                let u = &s[*a];
                let (l0, _) = ln_const(&u.c0, self.prec).ok_or(ElimError::LnConstantNonPositive(i))?;
                self.exact &= u.c0.is_one();
                let inv = u.c0.recip();
                let c1 = self.scale(&inv, &u.c1);
                // c2 = u2/u0 - (u1/u0)^2 / 2
                let q2 = self.scale(&inv, &u.c2);
                let sq = self.b.mul(&c1, &c1);
                let hs = self.scale(&half(), &sq);
                let c2 = self.b.sub(&q2, &hs);
                Series { c0: l0, c1, c2 }
            }
        })
    }
}

fn lower(c: &ValidatedCircuit, prec: usize, output: ElimOutput) -> Result<(Circuit, bool), ElimError> {
    let live = c.reachable();
    let mut lw = Lowering { b: Builder::new(c.input_arity), src: c, prec, exact: true };
    let mut s: Vec<Series> = Vec::with_capacity(c.gates.len());
    for i in 0..c.gates.len() {
        let v = if live[i] {
            lw.gate(i, &s)?
        } else {
            Series { c0: BigRational::zero(), c1: Val::zero(), c2: Val::zero() }
        };
        s.push(v);
    }
    let outs: Vec<Val> = c
        .outputs
        .iter()
        .map(|&o| {
            let t = &s[o];
            match output {
                ElimOutput::Quadratic => t.c2.clone(),
                ElimOutput::Linear => t.c1.clone(),
                ElimOutput::Constant => Val::Const(t.c0.clone()),
                ElimOutput::Full => {
                    let a = lw.b.add(&Val::Const(t.c0.clone()), &t.c1);
                    lw.b.add(&a, &t.c2)
                }
            }
        })
        .collect();
    let exact = lw.exact;
    Ok((lw.b.finish(&outs), exact))
}

/// Dyadic rational in `[-1, 1]` with 20 fractional bits.
fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<BigRational> {
    let den = BigInt::from(1u64 << 20);
    (0..n)
        .map(|_| BigRational::new(BigInt::from(rng.gen_range(-(1i64 << 20)..=(1i64 << 20))), den.clone()))
        .collect()
}

/// Compares `c0 + c1 + c2` (exact) with the source in big-float arithmetic.
fn check(c: &ValidatedCircuit, prec: usize, opts: CheckOptions) -> Result<usize, ElimError> {
    let (full, _) = lower(c, prec, ElimOutput::Full)?;
    let full = full.validate().expect("emitted circuit is well formed");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let tol = Big::from_f64(2f64.powi(-200), prec);
    for _ in 0..opts.points {
        let x = random_point(&mut rng, c.input_arity);
        let xs: Vec<Big> = x.iter().map(|q| Big::from_rational(q, prec)).collect();
        let want = evaluate_with(c, &xs, Prec(prec)).map_err(ElimError::CheckEvaluation)?.outputs;
        let got = evaluate_with::<BigRational>(&full, &x, ()).expect("pure AC").outputs;
        for (w, g) in want.iter().zip(&got) {
            let g = Big::from_rational(g, prec);
            let scale = w.abs().max_with_one();
            if w.sub(&g).abs() > tol.mul(&scale) {
                return Err(ElimError::QuadraticityCheckFailed(x));
            }
        }
    }
    Ok(opts.points)
}

trait MaxOne {
    fn max_with_one(self) -> Big;
}

impl MaxOne for Big {
    fn max_with_one(self) -> Big {
        let one = Big::one(self.precision());
        if self > one {
            self
        } else {
            one
        }
    }
}

/// Lowers `c` to a pure arithmetic circuit over `{+, -, ×}`.
///
/// With `opts.check`, the series sum `c0 + c1 + c2` is compared against the
/// source at random points to within `2^-200` relative.
pub fn eliminate(c: &ValidatedCircuit, opts: &ElimOptions) -> Result<Elimination, ElimError> {
    let (circuit, exact) = lower(c, opts.precision, opts.output)?;
    let checked_points = match opts.check {
        Some(co) => check(c, opts.precision, co)?,
        None => 0,
    };
    Ok(Elimination { circuit, source_size: c.size(), exact, checked_points })
}

/// Degree observed for one output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputDegree {
    pub output: usize,
    /// Largest degree seen across the sampled lines.
    pub degree: usize,
    /// True when the degree hit the detection ceiling.
    pub saturated: bool,
    /// Set when evaluation failed on some line.
    pub error: Option<String>,
}

impl OutputDegree {
    pub fn pass(&self) -> bool {
        self.error.is_none() && !self.saturated && self.degree <= 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticReport {
    pub trials: usize,
    pub outputs: Vec<OutputDegree>,
}

impl QuadraticReport {
    pub fn pass(&self) -> bool {
        self.outputs.iter().all(OutputDegree::pass)
    }
}

/// Highest degree the line test can resolve.
pub const MAX_DETECTED_DEGREE: usize = 7;

/// Samples `trials` random lines `a + t b` and reads the degree off forward differences.
pub fn assert_quadratic(c: &ValidatedCircuit, trials: usize, seed: u64) -> QuadraticReport {
    let prec = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs: Vec<OutputDegree> = (0..c.outputs.len())
        .map(|output| OutputDegree { output, degree: 0, saturated: false, error: None })
        .collect();
    let step = BigRational::new(1.into(), 8.into());
    for _ in 0..trials {
        let a = random_point(&mut rng, c.input_arity);
        let b = random_point(&mut rng, c.input_arity);
        let mut samples: Vec<Vec<Big>> = Vec::new();
        let mut failed = None;
        for j in 0..=MAX_DETECTED_DEGREE {
            let t = &step * BigRational::from_integer(j.into());
            let x: Vec<Big> = a.iter().zip(&b).map(|(p, d)| Big::from_rational(&(p + &t * d), prec)).collect();
            match evaluate_with(c, &x, Prec(prec)) {
                Ok(tr) => samples.push(tr.outputs),
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(e) = failed {
            for o in outs.iter_mut() {
                o.error.get_or_insert(e.clone());
            }
            continue;
        }
        for (oi, od) in outs.iter_mut().enumerate() {
            let mut d: Vec<Big> = samples.iter().map(|s| s[oi].clone()).collect();
            let scale = d.iter().map(Big::abs).fold(Big::one(prec), |m, v| if v > m { v } else { m });
            let mut deg = 0;
            for order in 1..=MAX_DETECTED_DEGREE {
                d = d.windows(2).map(|w| w[1].sub(&w[0])).collect();
                let tol = scale.mul(&Big::from_f64(1e-40 * 2f64.powi(order as i32), prec));
                if d.iter().any(|v| v.abs() > tol) {
                    deg = order;
                }
            }
            od.degree = od.degree.max(deg);
            od.saturated |= deg == MAX_DETECTED_DEGREE;
        }
    }
    QuadraticReport { trials, outputs: outs }
}
