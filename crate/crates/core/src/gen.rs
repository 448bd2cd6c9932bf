//! Seeded workload generators: random eACs, quadratics hidden behind
//! exp/ln/div detours, and random transformers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use crate::attention::{Activation, Aggregation, AttentionMode, HeadSpec, Layer, MlpKind, TransformerSpec};
use crate::circuit::{Builder, Circuit, GateKind, Val, ValidatedCircuit};
use crate::literal;
use crate::matrix::Matrix;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Uniform on the grid `k / 1000` in `[-1, 1]`.
pub fn grid_entry(rng: &mut impl Rng) -> BigRational {
    ratio(rng.gen_range(-1000..=1000), 1000)
}

fn small_coef(rng: &mut impl Rng) -> BigRational {
    let mut n = rng.gen_range(-9..=8);
    if n >= 0 {
        n += 1;
    }
    ratio(n, rng.gen_range(1..=8))
}

/// A random circuit together with a point where it is well conditioned.
#[derive(Debug, Clone)]
pub struct RandomEac {
    pub circuit: ValidatedCircuit,
    pub point: Vec<BigRational>,
}

/// `ops` operation gates over `arity` inputs, single output.
///
/// Gates are drawn one at a time and redrawn while their value or gradient
/// at `point` leaves a tame range: magnitudes at most `10^3`, exp arguments
/// at most 5, ln arguments and divisors at least `1/4` away from 0.
pub fn random_eac(rng: &mut impl Rng, arity: usize, ops: usize) -> RandomEac {
    const BOUND: f64 = 1e3;
    const GUARD: f64 = 0.25;
    let point: Vec<BigRational> = (0..arity).map(|_| grid_entry(rng)).collect();
    let mut c = Circuit::new(arity);
    // value and gradient of every gate at `point`
    let mut vals: Vec<(f64, Vec<f64>)> = Vec::new();
    for (k, p) in point.iter().enumerate() {
        c.push(GateKind::Input(k));
        vals.push((literal::rational_to_f64(p), (0..arity).map(|i| (i == k) as u8 as f64).collect()));
    }
    for _ in 0..2 {
        let q = small_coef(rng);
        vals.push((literal::rational_to_f64(&q), vec![0.0; arity]));
        c.push(GateKind::Const(literal::format_exact(&q)));
    }
    let comb = |x: &[f64], y: &[f64], f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| f(*a, *b)).collect()
    };
    for _ in 0..ops {
        let len = vals.len();
        let pick = |rng: &mut dyn rand::RngCore| {
            if rng.gen_bool(0.7) {
                rng.gen_range(len.saturating_sub(6)..len)
            } else {
                rng.gen_range(0..len)
            }
        };
        let mut chosen = None;
        for _ in 0..64 {
            let (a, b) = (pick(rng), pick(rng));
            let ((x, dx), (y, dy)) = (&vals[a], &vals[b]);
            let (x, y) = (*x, *y);
            let (g, v, dv) = match rng.gen_range(0..100) {
                0..=29 => (GateKind::Add(a, b), x + y, comb(dx, dy, &|p, q| p + q)),
                30..=49 => (GateKind::Sub(a, b), x - y, comb(dx, dy, &|p, q| p - q)),
                50..=74 => (GateKind::Mul(a, b), x * y, comb(dx, dy, &|p, q| p * y + x * q)),
                75..=83 if y.abs() >= GUARD => {
                    (GateKind::Div(a, b), x / y, comb(dx, dy, &|p, q| (p - x / y * q) / y))
                }
                84..=91 if x <= 5.0 => (GateKind::Exp(a), x.exp(), dx.iter().map(|p| p * x.exp()).collect()),
                92..=99 if x >= GUARD => (GateKind::Ln(a), x.ln(), dx.iter().map(|p| p / x).collect()),
                _ => continue,
            };
            if v.is_finite() && v.abs() <= BOUND && dv.iter().all(|d| d.abs() <= BOUND) {
                chosen = Some((g, v, dv));
                break;
            }
        }
        let (g, v, dv) = chosen.unwrap_or_else(|| {
            let (x, dx) = &vals[len - 1];
            (GateKind::Add(len - 1, arity), x + vals[arity].0, dx.clone())
        });
        c.push(g);
        vals.push((v, dv));
    }
    c.outputs = vec![c.gates.len() - 1];
    RandomEac { circuit: c.validate().expect("generated circuits are well formed"), point }
}

/// An eAC computing `constant + Σ linear_i x_i + Σ q x_i x_j` through
/// exp/ln/div detours that cancel exactly.
#[derive(Debug, Clone)]
pub struct DetouredQuadratic {
    pub circuit: ValidatedCircuit,
    pub constant: BigRational,
    pub linear: Vec<BigRational>,
    pub quad: Vec<(usize, usize, BigRational)>,
}

impl DetouredQuadratic {
    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        let mut acc = self.constant.clone();
        for (c, xi) in self.linear.iter().zip(x) {
            acc += c * xi;
        }
        for (i, j, c) in &self.quad {
            acc += c * &x[*i] * &x[*j];
        }
        acc
    }
}

/// Wraps `t` (zero at the origin) in an identity detour of the given kind.
fn detour(b: &mut Builder, rng: &mut impl Rng, t: &Val, kind: usize, arity: usize) -> Val {
    let one = Val::one();
    match kind % 5 {
        0 => {
            let e = b.exp(t);
            b.ln(&e).expect("wire operand")
        }
        1 => {
            let s = b.add(&one, t);
            let l = b.ln(&s).expect("wire operand");
            let e = b.exp(&l);
            b.sub(&e, &one)
        }
        2 => {
            let xr = b.input(rng.gen_range(0..arity));
            let w = b.exp(&xr);
            let p = b.mul(t, &w);
            b.div(&p, &w).expect("wire divisor")
        }
        3 => {
            let (r, s) = (b.input(rng.gen_range(0..arity)), b.input(rng.gen_range(0..arity)));
            let rs = b.mul(&r, &s);
            let w = b.add(&one, &rs);
            let p = b.mul(t, &w);
            b.div(&p, &w).expect("wire divisor")
        }
        _ => {
            let xr = b.input(rng.gen_range(0..arity));
            let e1 = b.exp(t);
            let e2 = b.exp(&xr);
            let p = b.mul(&e1, &e2);
            let l = b.ln(&p).expect("wire operand");
            b.sub(&l, &xr)
        }
    }
}

/// A random quadratic in `arity` variables behind at least one detour of
/// each kind, so the circuit has exp, ln and div gates.
pub fn detoured_quadratic(rng: &mut impl Rng, arity: usize) -> DetouredQuadratic {
    assert!(arity > 0);
    let mut b = Builder::new(arity);
    let constant = small_coef(rng);
    let linear: Vec<BigRational> =
        (0..arity).map(|_| if rng.gen_bool(0.6) { small_coef(rng) } else { BigRational::zero() }).collect();
    let mut quad = Vec::new();
    for i in 0..arity {
        for j in i..arity {
            if rng.gen_bool(0.5) {
                quad.push((i, j, small_coef(rng)));
            }
        }
    }
    if quad.is_empty() {
        quad.push((0, 0, BigRational::one()));
    }
    let mut terms: Vec<Val> = Vec::new();
    for (i, c) in linear.iter().enumerate() {
        if !c.is_zero() {
            let x = b.input(i);
            terms.push(b.mul(&Val::Const(c.clone()), &x));
        }
    }
    for (i, j, c) in &quad {
        let (x, y) = (b.input(*i), b.input(*j));
        let xy = b.mul(&x, &y);
        terms.push(b.mul(&Val::Const(c.clone()), &xy));
    }
    let mut acc = Val::zero();
    for (n, t) in terms.iter().enumerate() {
        let mut t = t.clone();
        let wraps = if n < 5 { 1 } else { rng.gen_range(0..=2) };
        for w in 0..wraps {
            let kind = if n < 5 && w == 0 { n } else { rng.gen_range(0..5) };
            t = detour(&mut b, rng, &t, kind, arity);
        }
        acc = b.add(&acc, &t);
        if rng.gen_bool(0.3) {
            let kind = rng.gen_range(0..5);
            acc = detour(&mut b, rng, &acc, kind, arity);
        }
    }
    // fewer than five terms: top up with detours of the missing kinds
    for kind in terms.len()..5 {
        acc = detour(&mut b, rng, &acc, kind, arity);
    }
    let out = b.add(&acc, &Val::Const(constant.clone()));
    let circuit = b.finish(&[out]).validate().expect("builder emits well-formed circuits");
    DetouredQuadratic { circuit, constant, linear, quad }
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix<BigRational> {
    Matrix::from_fn(rows, cols, |_, _| grid_entry(rng))
}

/// Shape of a [`random_transformer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerShape {
    pub n_tokens: usize,
    pub d_in: usize,
    pub m: usize,
    pub d_out: usize,
    pub layers: usize,
    pub heads: usize,
    /// Add sigmoid MLPs (standard and GLU, alternating) and an affine
    /// output map; otherwise every MLP is the identity and `d_out = m`.
    pub mlps: bool,
}

/// Softmax, sum aggregation, grid weights, key width 2.
pub fn random_transformer(rng: &mut impl Rng, s: TransformerShape) -> TransformerSpec<BigRational> {
    let layers = (0..s.layers)
        .map(|l| {
            let w = if l == 0 { s.d_in } else { s.m };
            let heads = (0..s.heads)
                .map(|_| HeadSpec {
                    w_q: random_matrix(rng, w, 2),
                    w_k: random_matrix(rng, w, 2),
                    w_v: random_matrix(rng, w, s.m),
                })
                .collect();
            let mlp = if !s.mlps {
                MlpKind::Identity
            } else if l % 2 == 0 {
                let hidden = rng.gen_range(1..=4);
                MlpKind::Standard {
                    w1: random_matrix(rng, s.m + 1, hidden),
                    w2: random_matrix(rng, hidden + 1, s.m),
                    act: Activation::Sigmoid,
                }
            } else {
                let hidden = rng.gen_range(1..=4);
                MlpKind::Glu {
                    w0: random_matrix(rng, s.m + 1, hidden),
                    w1: random_matrix(rng, s.m + 1, hidden),
                    w2: random_matrix(rng, hidden + 1, s.m),
                    act: Activation::Sigmoid,
                }
            };
            Layer { heads, mlp }
        })
        .collect();
    let (output_mlp, d_out) =
        if s.mlps { (MlpKind::Affine(random_matrix(rng, s.m + 1, s.d_out)), s.d_out) } else { (MlpKind::Identity, s.m) };
    TransformerSpec {
        n_tokens: s.n_tokens,
        d_in: s.d_in,
        m: s.m,
        d_out,
        layers,
        output_mlp,
        aggregation: Aggregation::Sum,
        mode: AttentionMode::Softmax,
    }
}
