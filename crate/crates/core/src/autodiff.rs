//! Reverse-mode derivative circuits for eACs, plus two independent
//! derivative oracles (dual numbers and central differences).

use std::fmt;

use crate::circuit::{evaluate_with, Circuit, EvalError, GateKind, ValidatedCircuit};
use crate::scalar::{NumError, Scalar};

/// A circuit with outputs `[F, dF/dx_1, …, dF/dx_n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientCircuit {
    pub circuit: Circuit,
    pub source_size: usize,
}

impl GradientCircuit {
    pub fn size(&self) -> usize {
        self.circuit.size()
    }

    /// `size(gradient) / size(source)`; 0 for an empty source.
    pub fn ratio(&self) -> f64 {
        if self.source_size == 0 {
            0.0
        } else {
            self.size() as f64 / self.source_size as f64
        }
    }

    /// The bound `6 s + n + 2`.
    pub fn bound(&self) -> usize {
        6 * self.source_size + self.circuit.input_arity + 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GradError {
    MultipleOutputs(usize),
}

impl fmt::Display for GradError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradError::MultipleOutputs(n) => write!(f, "gradient needs exactly one output, found {n}"),
        }
    }
}

impl std::error::Error for GradError {}

struct Emitter {
    c: Circuit,
    zero: Option<usize>,
    one: Option<usize>,
}

impl Emitter {
    fn push(&mut self, g: GateKind) -> usize {
        self.c.push(g)
    }

    fn zero(&mut self) -> usize {
        if let Some(z) = self.zero {
            return z;
        }
        let z = self.c.push(GateKind::Const("0".into()));
        self.zero = Some(z);
        z
    }

    fn one(&mut self) -> usize {
        if let Some(o) = self.one {
            return o;
        }
        let o = self.c.push(GateKind::Const("1".into()));
        self.one = Some(o);
        o
    }

    fn accumulate(&mut self, adj: &mut [Option<usize>], target: usize, contrib: usize) {
        adj[target] = Some(match adj[target] {
            None => contrib,
            Some(p) => self.push(GateKind::Add(p, contrib)),
        });
    }

    /// Adds `-contrib` to the adjoint of `target`.
    fn accumulate_neg(&mut self, adj: &mut [Option<usize>], target: usize, contrib: usize) {
        let base = match adj[target] {
            Some(p) => p,
            None => self.zero(),
        };
        adj[target] = Some(self.push(GateKind::Sub(base, contrib)));
    }
}

/// Builds the derivative circuit of a single-output eAC.
///
/// The forward gates are copied unchanged; the reverse sweep visits gates
/// from last to first and only propagates into input-dependent operands.
pub fn gradient_circuit(c: &ValidatedCircuit) -> Result<GradientCircuit, GradError> {
    if c.outputs.len() != 1 {
        return Err(GradError::MultipleOutputs(c.outputs.len()));
    }
    let n = c.input_arity;
    let out = c.outputs[0];

    // one gate per input variable
    let mut canon: Vec<Option<usize>> = vec![None; n];
    let mut remap: Vec<usize> = (0..c.gates.len()).collect();
    let mut e = Emitter { c: Circuit::new(n), zero: None, one: None };
    for (i, g) in c.gates.iter().enumerate() {
        let r = |k: usize| remap[k];
        let ng = match g {
            GateKind::Input(k) => match canon[*k] {
                Some(first) => {
                    remap[i] = first;
                    GateKind::Input(*k)
                }
                None => {
                    canon[*k] = Some(i);
                    GateKind::Input(*k)
                }
            },
            GateKind::Const(s) => GateKind::Const(s.clone()),
            GateKind::Add(a, b) => GateKind::Add(r(*a), r(*b)),
            GateKind::Sub(a, b) => GateKind::Sub(r(*a), r(*b)),
            GateKind::Mul(a, b) => GateKind::Mul(r(*a), r(*b)),
            GateKind::Div(a, b) => GateKind::Div(r(*a), r(*b)),
            GateKind::Exp(a) => GateKind::Exp(r(*a)),
            GateKind::Ln(a) => GateKind::Ln(r(*a)),
        };
        e.push(ng);
    }
    let forward = e.c.clone();
    let dep = forward.input_dependence();
    let out = remap[out];

    let mut adj: Vec<Option<usize>> = vec![None; forward.gates.len()];
    if dep[out] {
        adj[out] = Some(e.one());
    }
    for i in (0..=out).rev() {
        let a = match adj[i] {
            Some(a) => a,
            None => continue,
        };
        match forward.gates[i] {
            GateKind::Const(_) | GateKind::Input(_) => {}
            GateKind::Add(x, y) => {
                for t in [x, y] {
                    if dep[t] {
                        e.accumulate(&mut adj, t, a);
                    }
                }
            }
            GateKind::Sub(x, y) => {
                if dep[x] {
                    e.accumulate(&mut adj, x, a);
                }
                if dep[y] {
                    e.accumulate_neg(&mut adj, y, a);
                }
            }
            GateKind::Mul(x, y) => {
                if dep[x] {
                    let t = e.push(GateKind::Mul(a, y));
                    e.accumulate(&mut adj, x, t);
                }
                if dep[y] {
                    let t = e.push(GateKind::Mul(a, x));
                    e.accumulate(&mut adj, y, t);
                }
            }
            GateKind::Div(x, y) => {
                let t = e.push(GateKind::Div(a, y));
                if dep[x] {
                    e.accumulate(&mut adj, x, t);
                }
                if dep[y] {
                    let u = e.push(GateKind::Mul(t, i));
                    e.accumulate_neg(&mut adj, y, u);
                }
            }
            GateKind::Exp(x) => {
                let t = e.push(GateKind::Mul(a, i));
                e.accumulate(&mut adj, x, t);
            }
            GateKind::Ln(x) => {
                let t = e.push(GateKind::Div(a, x));
                e.accumulate(&mut adj, x, t);
            }
        }
    }
    let mut outputs = vec![out];
    for k in 0..n {
        let d = match canon[k].and_then(|g| adj[g]) {
            Some(g) => g,
            None => e.zero(),
        };
        outputs.push(d);
    }
    e.c.outputs = outputs;
    Ok(GradientCircuit { circuit: e.c, source_size: c.size() })
}

/// Value and directional derivative along `e_index` by dual numbers.
pub fn forward_mode_eval<T: Scalar>(
    c: &ValidatedCircuit,
    inputs: &[T],
    index: usize,
    ctx: T::Ctx,
) -> Result<Vec<(T, T)>, EvalError> {
    if inputs.len() != c.input_arity {
        return Err(EvalError::ArityMismatch { expected: c.input_arity, got: inputs.len() });
    }
    let zero = T::zero_with(ctx);
    let one = T::one_with(ctx);
    let lift = |g: usize, e: NumError| match e {
        NumError::DivisionByZero => EvalError::DivisionByZero(g),
        NumError::LnNonPositive => EvalError::LnNonPositive(g),
        NumError::Overflow | NumError::NonFinite => EvalError::Overflow(g, T::mode(ctx)),
    };
    let mut v: Vec<(T, T)> = Vec::with_capacity(c.gates.len());
    for (i, g) in c.gates.iter().enumerate() {
        let r: Result<(T, T), NumError> = match g {
            GateKind::Const(_) => Ok((T::from_rational(c.constant(i).expect("validated"), ctx), zero.clone())),
            GateKind::Input(k) => Ok((inputs[*k].clone(), if *k == index { one.clone() } else { zero.clone() })),
            GateKind::Add(a, b) => Ok((v[*a].0.add(&v[*b].0), v[*a].1.add(&v[*b].1))),
            GateKind::Sub(a, b) => Ok((v[*a].0.sub(&v[*b].0), v[*a].1.sub(&v[*b].1))),
            GateKind::Mul(a, b) => {
                let (x, dx) = &v[*a];
                let (y, dy) = &v[*b];
                Ok((x.mul(y), dx.mul(y).add(&x.mul(dy))))
            }
            GateKind::Div(a, b) => {
                let (x, dx) = &v[*a];
                let (y, dy) = &v[*b];
                x.div(y).and_then(|q| dx.sub(&q.mul(dy)).div(y).map(|d| (q, d)))
            }
            GateKind::Exp(a) => {
                let (x, dx) = &v[*a];
                x.exp().map(|ex| {
                    let d = dx.mul(&ex);
                    (ex, d)
                })
            }
            GateKind::Ln(a) => {
                let (x, dx) = &v[*a];
                x.ln().and_then(|l| dx.div(x).map(|d| (l, d)))
            }
        };
        let (val, tan) = r.map_err(|e| lift(i, e))?;
        let val = val.check_finite().map_err(|e| lift(i, e))?;
        let tan = tan.check_finite().map_err(|e| lift(i, e))?;
        v.push((val, tan));
    }
    Ok(c.outputs.iter().map(|&o| v[o].clone()).collect())
}

/// Default central-difference step `1e-5 · max(1, |x_i|)`.
pub fn default_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// `(F(x + h e_i) - F(x - h e_i)) / 2h` on the first output, in f64.
pub fn finite_difference(c: &ValidatedCircuit, inputs: &[f64], index: usize, step: f64) -> Result<f64, EvalError> {
    let mut up = inputs.to_vec();
    let mut dn = inputs.to_vec();
    up[index] += step;
    dn[index] -= step;
    let fu = evaluate_with(c, &up, ())?.outputs[0];
    let fd = evaluate_with(c, &dn, ())?.outputs[0];
    Ok((fu - fd) / (2.0 * step))
}
