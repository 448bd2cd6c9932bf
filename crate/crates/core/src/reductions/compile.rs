//! Transformers with symbolic weights compiled into eACs.

use std::fmt;

use num_rational::BigRational;

use crate::attention::{Activation, AttentionMode, AttnError, HeadSpec, MlpKind, TransformerSpec, Aggregation};
use crate::circuit::{BuildError, Builder, Val, ValidatedCircuit};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A weight or input entry: a fixed rational or circuit input `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Const(BigRational),
    Input(usize),
}

impl Entry {
    pub fn int(v: i64) -> Entry {
        Entry::Const(BigRational::from_integer(v.into()))
    }

    pub fn zero() -> Entry {
        Entry::int(0)
    }

    /// Value under the input assignment `inputs`.
    pub fn instantiate<T: Scalar>(&self, inputs: &[T], ctx: T::Ctx) -> T {
        match self {
            Entry::Const(q) => T::from_rational(q, ctx),
            Entry::Input(k) => inputs[*k].clone(),
        }
    }
}

/// Which outputs the circuit exposes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileTarget {
    /// Every entry of the output matrix, row-major.
    FullOutput,
    /// One output per list: the sum of the listed `(row, col)` entries.
    Functionals(Vec<Vec<(usize, usize)>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileError {
    HardmaxNotCompilable,
    NotCompilable(String),
    Build(BuildError),
    Spec(AttnError),
}

impl fmt::Display for CompileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompileError::HardmaxNotCompilable => f.write_str("hardmax attention has no eAC form"),
            CompileError::NotCompilable(s) => write!(f, "not expressible as an eAC: {s}"),
            CompileError::Build(e) => write!(f, "{e}"),
            CompileError::Spec(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CompileError {}

impl From<BuildError> for CompileError {
    fn from(e: BuildError) -> Self {
        CompileError::Build(e)
    }
}

impl From<AttnError> for CompileError {
    fn from(e: AttnError) -> Self {
        CompileError::Spec(e)
    }
}

type Rows = Vec<Vec<Val>>;

fn dot(b: &mut Builder, x: &[Val], w: &Matrix<Val>, col: usize) -> Val {
    let mut acc = Val::zero();
    for (i, v) in x.iter().enumerate() {
        let p = b.mul(v, w.get(i, col));
        acc = b.add(&acc, &p);
    }
    acc
}

fn matmul(b: &mut Builder, x: &Rows, w: &Matrix<Val>) -> Rows {
    x.iter().map(|row| (0..w.cols()).map(|j| dot(b, row, w, j)).collect()).collect()
}

fn affine(b: &mut Builder, row: &[Val], w: &Matrix<Val>) -> Vec<Val> {
    let bias = w.rows() - 1;
    (0..w.cols())
        .map(|j| {
            let s = dot(b, row, w, j);
            b.add(&s, w.get(bias, j))
        })
        .collect()
}

fn activation(b: &mut Builder, act: &Activation, x: &Val) -> Result<Val, CompileError> {
    match act {
        Activation::Relu => Err(CompileError::NotCompilable("relu activation".into())),
        Activation::Sigmoid => {
            let nx = b.neg(x);
            let e = b.exp(&nx);
            let d = b.add(&Val::one(), &e);
            Ok(b.div(&Val::one(), &d)?)
        }
        Activation::Custom(c) => Ok(b.inline(c, std::slice::from_ref(x))?.remove(0)),
    }
}

fn mlp(b: &mut Builder, row: Vec<Val>, mlp: &MlpKind<Val>) -> Result<Vec<Val>, CompileError> {
    match mlp {
        MlpKind::Identity => Ok(row),
        MlpKind::Affine(w) => Ok(affine(b, &row, w)),
        MlpKind::Glu { w0, w1, w2, act } => {
            let u = affine(b, &row, w0);
            let v = affine(b, &row, w1);
            let mut h = Vec::with_capacity(u.len());
            for (u, v) in u.iter().zip(&v) {
                let s = activation(b, act, v)?;
                h.push(b.mul(u, &s));
            }
            Ok(affine(b, &h, w2))
        }
        MlpKind::Standard { w1, w2, act } => {
            let h = affine(b, &row, w1)
                .iter()
                .map(|v| activation(b, act, v))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(affine(b, &h, w2))
        }
        MlpKind::RatioReadout { start, len, denominator } => {
            let d = row[*denominator].clone();
            row[*start..start + len].iter().map(|v| b.div(v, &d).map_err(CompileError::from)).collect()
        }
    }
}

/// `exp(Q K^T)` times `V`, row-normalized for softmax. Unshifted: exact in
/// the algebra, and the max is not an eAC operation.
fn head(b: &mut Builder, x: &Rows, h: &HeadSpec<Val>, mode: AttentionMode) -> Result<Rows, CompileError> {
    let q = matmul(b, x, &h.w_q);
    let k = matmul(b, x, &h.w_k);
    let v = matmul(b, x, &h.w_v);
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for qi in &q {
        let e: Vec<Val> = k
            .iter()
            .map(|kj| {
                let mut s = Val::zero();
                for (a, c) in qi.iter().zip(kj) {
                    let p = b.mul(a, c);
                    s = b.add(&s, &p);
                }
                b.exp(&s)
            })
            .collect();
        let mut denom: Option<Val> = None;
        let mut row = Vec::with_capacity(h.value_dim());
        for c in 0..h.value_dim() {
            if v.iter().all(|vj| vj[c].is_zero()) {
                row.push(Val::zero());
                continue;
            }
            let mut num = Val::zero();
            for (ej, vj) in e.iter().zip(&v) {
                let p = b.mul(ej, &vj[c]);
                num = b.add(&num, &p);
            }
            let r = match mode {
                AttentionMode::Denormalized => num,
                AttentionMode::Softmax => {
                    let d = match &denom {
                        Some(d) => d.clone(),
                        None => {
                            let d = b.sum(e.iter());
                            denom = Some(d.clone());
                            d
                        }
                    };
                    b.div(&num, &d)?
                }
                AttentionMode::Hardmax => return Err(CompileError::HardmaxNotCompilable),
            };
            row.push(r);
        }
        out.push(row);
    }
    Ok(out)
}

/// Builds the circuit `C(inputs) = T_W(X)` where the entries of `spec` and
/// `x` are constants or inputs among `0..input_arity`.
pub fn compile_transformer_to_eac(
    spec: &TransformerSpec<Entry>,
    x: &Matrix<Entry>,
    input_arity: usize,
    target: &CompileTarget,
) -> Result<ValidatedCircuit, CompileError> {
    if spec.mode == AttentionMode::Hardmax {
        return Err(CompileError::HardmaxNotCompilable);
    }
    spec.validate()?;
    if x.shape() != (spec.n_tokens, spec.d_in) {
        return Err(CompileError::Spec(AttnError::Shape(format!(
            "input is {:?}, spec expects ({}, {})",
            x.shape(),
            spec.n_tokens,
            spec.d_in
        ))));
    }
    let check = |e: &Entry| match e {
        Entry::Input(k) if *k >= input_arity => Err(CompileError::Build(BuildError::InputOutOfRange(*k))),
        _ => Ok(()),
    };
    x.data().iter().try_for_each(check)?;
    for l in &spec.layers {
        for h in &l.heads {
            h.w_q.data().iter().chain(h.w_k.data()).chain(h.w_v.data()).try_for_each(check)?;
        }
    }

    let mut b = Builder::new(input_arity);
    let inputs: Vec<Val> = (0..input_arity).map(|k| b.input(k)).collect();
    let lift = |e: &Entry| match e {
        Entry::Const(q) => Val::Const(q.clone()),
        Entry::Input(k) => inputs[*k].clone(),
    };
    let vspec = spec.map(lift);
    let mut state: Rows = (0..x.rows()).map(|i| x.row(i).iter().map(lift).collect()).collect();

    for layer in &vspec.layers {
        let mut z: Rows = state
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.resize(vspec.m, Val::zero());
                r
            })
            .collect();
        let hcount = layer.heads.len();
        for (h, hs) in layer.heads.iter().enumerate() {
            let y = head(&mut b, &state, hs, vspec.mode)?;
            let off = match vspec.aggregation {
                Aggregation::Sum => 0,
                Aggregation::Concat => h * (vspec.m / hcount),
            };
            for (zi, yi) in z.iter_mut().zip(&y) {
                for (j, v) in yi.iter().enumerate() {
                    zi[off + j] = b.add(&zi[off + j], v);
                }
            }
        }
        state = z.into_iter().map(|r| mlp(&mut b, r, &layer.mlp)).collect::<Result<_, _>>()?;
    }
    let y: Rows = state.into_iter().map(|r| mlp(&mut b, r, &vspec.output_mlp)).collect::<Result<_, _>>()?;

    let outputs: Vec<Val> = match target {
        CompileTarget::FullOutput => y.into_iter().flatten().collect(),
        CompileTarget::Functionals(fs) => {
            let mut outs = Vec::with_capacity(fs.len());
            for f in fs {
                let mut acc = Val::zero();
                for &(i, j) in f {
                    let v = y
                        .get(i)
                        .and_then(|r| r.get(j))
                        .ok_or_else(|| CompileError::Spec(AttnError::Shape(format!("entry ({i}, {j}) out of range"))))?;
                    acc = b.add(&acc, v);
                }
                outs.push(acc);
            }
            outs
        }
    };
    Ok(b.finish(&outputs).prune().validate().expect("builder emits well-formed circuits"))
}
