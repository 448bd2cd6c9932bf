//! Attention heads and transformers over any [`Scalar`].
//!
//! Embeddings are row-wise linear maps: `Q(X) = X W_Q`. The first layer reads
//! `d_in` columns; its residual is the input padded with zero columns to `m`.

pub mod constructions;
pub mod io;

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::circuit::{evaluate_with, EvalError, ValidatedCircuit};
use crate::matrix::Matrix;
use crate::scalar::{NumError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    Softmax,
    Hardmax,
    /// `exp(Q K^T) V` with no row normalization.
    Denormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    Concat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttnError {
    Shape(String),
    NonFiniteInput,
    Numeric(NumError),
    Activation(EvalError),
    GapHypothesisUnverifiable(String),
    SigmaZeroAtC,
    IndivisibleHeads { m: usize, heads: usize },
    Unsupported(String),
}

impl fmt::Display for AttnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttnError::Shape(s) => write!(f, "shape mismatch: {s}"),
            AttnError::NonFiniteInput => f.write_str("non-finite input"),
            AttnError::Numeric(e) => write!(f, "numeric error: {e}"),
            AttnError::Activation(e) => write!(f, "activation failed: {e}"),
            AttnError::GapHypothesisUnverifiable(s) => write!(f, "logit gap hypothesis not established: {s}"),
            AttnError::SigmaZeroAtC => f.write_str("activation vanishes at the chosen constant"),
            AttnError::IndivisibleHeads { m, heads } => write!(f, "{heads} heads do not divide embedding {m}"),
            AttnError::Unsupported(s) => write!(f, "unsupported: {s}"),
        }
    }
}

impl std::error::Error for AttnError {}

impl From<NumError> for AttnError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::NonFinite => AttnError::NonFiniteInput,
            e => AttnError::Numeric(e),
        }
    }
}

fn shape(msg: impl Into<String>) -> AttnError {
    AttnError::Shape(msg.into())
}

/// Scalar nonlinearity used inside MLPs.
#[derive(Debug, Clone)]
pub enum Activation {
    Relu,
    /// The logistic function `1 / (1 + e^-x)`.
    Sigmoid,
    /// A one-input, one-output eAC.
    Custom(Arc<ValidatedCircuit>),
}

impl PartialEq for Activation {
    fn eq(&self, o: &Self) -> bool {
        match (self, o) {
            (Activation::Relu, Activation::Relu) | (Activation::Sigmoid, Activation::Sigmoid) => true,
            (Activation::Custom(a), Activation::Custom(b)) => a == b,
            _ => false,
        }
    }
}

impl Activation {
    pub fn custom(c: ValidatedCircuit) -> Result<Activation, AttnError> {
        if c.input_arity != 1 || c.outputs.len() != 1 {
            return Err(shape("custom activation must have one input and one output"));
        }
        Ok(Activation::Custom(Arc::new(c)))
    }

    pub fn apply<T: Scalar>(&self, x: &T, ctx: T::Ctx) -> Result<T, AttnError> {
        match self {
            Activation::Relu => Ok(if x.is_neg() { T::zero_with(ctx) } else { x.clone() }),
            Activation::Sigmoid => {
                let one = T::one_with(ctx);
                if x.is_neg() {
                    let e = x.exp()?;
                    Ok(e.div(&one.add(&e))?)
                } else {
                    let e = x.neg().exp()?;
                    Ok(one.div(&one.add(&e))?)
                }
            }
            Activation::Custom(c) => {
                evaluate_with(c, std::slice::from_ref(x), ctx).map(|t| t.outputs[0].clone()).map_err(AttnError::Activation)
            }
        }
    }
}

/// One head: `W_Q`, `W_K` are `d × p`, `W_V` is `d × m_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
}

impl<T: Clone> HeadSpec<T> {
    pub fn new(w_q: Matrix<T>, w_k: Matrix<T>, w_v: Matrix<T>) -> Result<Self, AttnError> {
        if w_q.rows() != w_k.rows() || w_q.rows() != w_v.rows() || w_q.cols() != w_k.cols() {
            return Err(shape(format!(
                "head weights {:?} {:?} {:?}",
                w_q.shape(),
                w_k.shape(),
                w_v.shape()
            )));
        }
        Ok(HeadSpec { w_q, w_k, w_v })
    }

    pub fn input_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn value_dim(&self) -> usize {
        self.w_v.cols()
    }

    pub fn map<U>(&self, f: &impl Fn(&T) -> U) -> HeadSpec<U> {
        HeadSpec { w_q: self.w_q.map(f), w_k: self.w_k.map(f), w_v: self.w_v.map(f) }
    }
}

/// Row-wise maps applied after each layer and at the output.
///
/// Weight matrices carry a trailing bias row, so `(x, 1) W`.
#[derive(Debug, Clone, PartialEq)]
pub enum MlpKind<T> {
    Identity,
    /// `((x,1) W0 ⊙ σ((x,1) W1), 1) W2`.
    Glu { w0: Matrix<T>, w1: Matrix<T>, w2: Matrix<T>, act: Activation },
    /// `(σ((x,1) W1), 1) W2`.
    Standard { w1: Matrix<T>, w2: Matrix<T>, act: Activation },
    /// `(x,1) W`.
    Affine(Matrix<T>),
    /// `x[start + i] / x[denominator]` for `i < len`.
    RatioReadout { start: usize, len: usize, denominator: usize },
}

impl<T: Clone> MlpKind<T> {
    pub fn map<U>(&self, f: &impl Fn(&T) -> U) -> MlpKind<U> {
        match self {
            MlpKind::Identity => MlpKind::Identity,
            MlpKind::Glu { w0, w1, w2, act } => {
                MlpKind::Glu { w0: w0.map(f), w1: w1.map(f), w2: w2.map(f), act: act.clone() }
            }
            MlpKind::Standard { w1, w2, act } => MlpKind::Standard { w1: w1.map(f), w2: w2.map(f), act: act.clone() },
            MlpKind::Affine(w) => MlpKind::Affine(w.map(f)),
            MlpKind::RatioReadout { start, len, denominator } => {
                MlpKind::RatioReadout { start: *start, len: *len, denominator: *denominator }
            }
        }
    }

    /// Output width on rows of width `input`, or a shape error.
    pub fn output_dim(&self, input: usize) -> Result<usize, AttnError> {
        let bias = |w: &Matrix<T>, name: &str, rows: usize| {
            if w.rows() == rows + 1 {
                Ok(())
            } else {
                Err(shape(format!("{name} has {} rows, expected {}", w.rows(), rows + 1)))
            }
        };
        match self {
            MlpKind::Identity => Ok(input),
            MlpKind::Affine(w) => {
                bias(w, "affine weight", input)?;
                Ok(w.cols())
            }
            MlpKind::Glu { w0, w1, w2, .. } => {
                bias(w0, "W0", input)?;
                bias(w1, "W1", input)?;
                if w0.cols() != w1.cols() {
                    return Err(shape("W0 and W1 hidden widths differ"));
                }
                bias(w2, "W2", w0.cols())?;
                Ok(w2.cols())
            }
            MlpKind::Standard { w1, w2, .. } => {
                bias(w1, "W1", input)?;
                bias(w2, "W2", w1.cols())?;
                Ok(w2.cols())
            }
            MlpKind::RatioReadout { start, len, denominator } => {
                if start + len > input || *denominator >= input {
                    return Err(shape("ratio readout indices out of range"));
                }
                Ok(*len)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub heads: Vec<HeadSpec<T>>,
    pub mlp: MlpKind<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerSpec<T> {
    pub n_tokens: usize,
    pub d_in: usize,
    pub m: usize,
    pub d_out: usize,
    pub layers: Vec<Layer<T>>,
    pub output_mlp: MlpKind<T>,
    pub aggregation: Aggregation,
    pub mode: AttentionMode,
}

impl<T: Clone> TransformerSpec<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> TransformerSpec<U> {
        TransformerSpec {
            n_tokens: self.n_tokens,
            d_in: self.d_in,
            m: self.m,
            d_out: self.d_out,
            layers: self
                .layers
                .iter()
                .map(|l| Layer { heads: l.heads.iter().map(|h| h.map(&f)).collect(), mlp: l.mlp.map(&f) })
                .collect(),
            output_mlp: self.output_mlp.map(&f),
            aggregation: self.aggregation,
            mode: self.mode,
        }
    }

    /// Width of the rows entering layer `l`.
    pub fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.d_in
        } else {
            self.m
        }
    }

    pub fn validate(&self) -> Result<(), AttnError> {
        if !self.layers.is_empty() && self.d_in > self.m {
            return Err(shape(format!("d_in {} exceeds m {}", self.d_in, self.m)));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let w = self.layer_input_dim(l);
            let hcount = layer.heads.len();
            let want_v = match self.aggregation {
                Aggregation::Sum => self.m,
                Aggregation::Concat => {
                    if hcount == 0 || !self.m.is_multiple_of(hcount) {
                        return Err(AttnError::IndivisibleHeads { m: self.m, heads: hcount });
                    }
                    self.m / hcount
                }
            };
            for (h, head) in layer.heads.iter().enumerate() {
                if head.input_dim() != w || head.value_dim() != want_v || head.w_q.cols() != head.w_k.cols() {
                    return Err(shape(format!(
                        "layer {l} head {h}: weights {:?} {:?} {:?}, expected {w} rows and {want_v} value columns",
                        head.w_q.shape(),
                        head.w_k.shape(),
                        head.w_v.shape()
                    )));
                }
            }
            let out = layer.mlp.output_dim(self.m)?;
            if out != self.m {
                return Err(shape(format!("layer {l} MLP maps {} to {out}", self.m)));
            }
        }
        let last = if self.layers.is_empty() { self.d_in } else { self.m };
        let out = self.output_mlp.output_dim(last)?;
        if out != self.d_out {
            return Err(shape(format!("output MLP yields {out} columns, expected {}", self.d_out)));
        }
        Ok(())
    }
}

fn check_finite<T: Scalar>(v: &T) -> Result<(), AttnError> {
    v.clone().check_finite().map(|_| ()).map_err(|_| AttnError::NonFiniteInput)
}

/// Max-shifted softmax.
pub fn softmax_row<T: Scalar>(v: &[T], ctx: T::Ctx) -> Result<Vec<T>, AttnError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.iter().try_for_each(check_finite)?;
    let mx = v.iter().fold(&v[0], |m, x| m.max_of(x)).clone();
    let e: Vec<T> = v.iter().map(|x| x.sub(&mx).exp()).collect::<Result<_, _>>()?;
    let mut s = T::zero_with(ctx);
    for x in &e {
        s = s.add(x);
    }
    Ok(e.iter().map(|x| x.div(&s)).collect::<Result<_, _>>()?)
}

/// Default tie tolerance: exact for exact scalars, else `1e-9 · max(1, |max|)`.
pub fn default_tie_epsilon<T: Scalar>(max: &T, ctx: T::Ctx) -> T {
    if T::is_exact() {
        T::zero_with(ctx)
    } else {
        let one = T::one_with(ctx);
        T::from_f64(1e-9, ctx).mul(max.magnitude().max_of(&one))
    }
}

/// Uniform weight on every entry within `eps` of the maximum.
pub fn hardmax_row_with<T: Scalar>(v: &[T], eps: &T, ctx: T::Ctx) -> Result<Vec<T>, AttnError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.iter().try_for_each(check_finite)?;
    let mx = v.iter().fold(&v[0], |m, x| m.max_of(x)).clone();
    let floor = mx.sub(eps);
    let hit: Vec<bool> = v.iter().map(|x| x.compare(&floor) != Ordering::Less).collect();
    let count = hit.iter().filter(|&&h| h).count();
    let w = T::one_with(ctx).div(&T::from_i64(count as i64, ctx))?;
    Ok(hit.iter().map(|&h| if h { w.clone() } else { T::zero_with(ctx) }).collect())
}

pub fn hardmax_row<T: Scalar>(v: &[T], ctx: T::Ctx) -> Result<Vec<T>, AttnError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let mx = v.iter().fold(&v[0], |m, x| m.max_of(x)).clone();
    hardmax_row_with(v, &default_tie_epsilon(&mx, ctx), ctx)
}

fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, ctx: T::Ctx) -> Result<Matrix<T>, AttnError> {
    a.matmul(b, ctx).map_err(|e| shape(e.to_string()))
}

/// Logits `(X W_Q)(X W_K)^T`.
pub fn attention_logits<T: Scalar>(x: &Matrix<T>, head: &HeadSpec<T>, ctx: T::Ctx) -> Result<Matrix<T>, AttnError> {
    let q = matmul(x, &head.w_q, ctx)?;
    let k = matmul(x, &head.w_k, ctx)?;
    matmul(&q, &k.transpose(), ctx)
}

/// Row-normalized (or, for `Denormalized`, raw exponentiated) attention weights.
pub fn attention_weights<T: Scalar>(
    x: &Matrix<T>,
    head: &HeadSpec<T>,
    mode: AttentionMode,
    ctx: T::Ctx,
) -> Result<Matrix<T>, AttnError> {
    let s = attention_logits(x, head, ctx)?;
    let n = s.rows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let r = s.row(i);
        rows.push(match mode {
            AttentionMode::Softmax => softmax_row(r, ctx)?,
            AttentionMode::Hardmax => hardmax_row(r, ctx)?,
            AttentionMode::Denormalized => {
                r.iter().try_for_each(check_finite)?;
                r.iter().map(|v| v.exp()).collect::<Result<_, _>>()?
            }
        });
    }
    Ok(Matrix::from_vec(n, n, rows.into_iter().flatten().collect()))
}

/// One head applied to `x` (`N × d`), giving `N × m_v`.
pub fn attention_head<T: Scalar>(
    x: &Matrix<T>,
    head: &HeadSpec<T>,
    mode: AttentionMode,
    ctx: T::Ctx,
) -> Result<Matrix<T>, AttnError> {
    if x.cols() != head.input_dim() {
        return Err(shape(format!("input has {} columns, head expects {}", x.cols(), head.input_dim())));
    }
    let w = attention_weights(x, head, mode, ctx)?;
    let v = matmul(x, &head.w_v, ctx)?;
    matmul(&w, &v, ctx)
}

fn affine<T: Scalar>(row: &[T], w: &Matrix<T>, ctx: T::Ctx) -> Vec<T> {
    let bias = w.rows() - 1;
    (0..w.cols())
        .map(|j| {
            let mut acc = w.get(bias, j).clone();
            for (i, x) in row.iter().enumerate() {
                let c = w.get(i, j);
                if !x.is_zero_value() && !c.is_zero_value() {
                    acc = acc.add(&x.mul(c));
                }
            }
            if acc.is_zero_value() {
                T::zero_with(ctx)
            } else {
                acc
            }
        })
        .collect()
}

pub fn mlp_apply<T: Scalar>(row: &[T], mlp: &MlpKind<T>, ctx: T::Ctx) -> Result<Vec<T>, AttnError> {
    mlp.output_dim(row.len())?;
    match mlp {
        MlpKind::Identity => Ok(row.to_vec()),
        MlpKind::Affine(w) => Ok(affine(row, w, ctx)),
        MlpKind::Glu { w0, w1, w2, act } => {
            let a = affine(row, w0, ctx);
            let b = affine(row, w1, ctx);
            let h: Vec<T> = a.iter().zip(&b).map(|(a, b)| Ok(a.mul(&act.apply(b, ctx)?))).collect::<Result<_, AttnError>>()?;
            Ok(affine(&h, w2, ctx))
        }
        MlpKind::Standard { w1, w2, act } => {
            let h: Vec<T> = affine(row, w1, ctx).iter().map(|v| act.apply(v, ctx)).collect::<Result<_, _>>()?;
            Ok(affine(&h, w2, ctx))
        }
        MlpKind::RatioReadout { start, len, denominator } => {
            let d = &row[*denominator];
            row[*start..start + len].iter().map(|v| v.div(d).map_err(AttnError::from)).collect()
        }
    }
}

fn mlp_rows<T: Scalar>(x: &Matrix<T>, mlp: &MlpKind<T>, ctx: T::Ctx) -> Result<Matrix<T>, AttnError> {
    if matches!(mlp, MlpKind::Identity) {
        return Ok(x.clone());
    }
    let rows: Vec<Vec<T>> = (0..x.rows()).map(|i| mlp_apply(x.row(i), mlp, ctx)).collect::<Result<_, _>>()?;
    let cols = mlp.output_dim(x.cols())?;
    Ok(Matrix::from_vec(x.rows(), cols, rows.into_iter().flatten().collect()))
}

/// One layer: residual plus aggregated heads, then the layer MLP.
pub fn layer_forward<T: Scalar>(
    x: &Matrix<T>,
    spec: &TransformerSpec<T>,
    l: usize,
    ctx: T::Ctx,
) -> Result<Matrix<T>, AttnError> {
    let layer = &spec.layers[l];
    let mut z = x.pad_cols(spec.m, ctx);
    let hcount = layer.heads.len();
    for (h, head) in layer.heads.iter().enumerate() {
        let y = attention_head(x, head, spec.mode, ctx)?;
        let off = match spec.aggregation {
            Aggregation::Sum => 0,
            Aggregation::Concat => h * (spec.m / hcount),
        };
        for i in 0..y.rows() {
            for j in 0..y.cols() {
                let v = y.get(i, j);
                if !v.is_zero_value() {
                    z.set(i, off + j, z.get(i, off + j).add(v));
                }
            }
        }
    }
    mlp_rows(&z, &layer.mlp, ctx)
}

/// Layer inputs `X^(0), …, X^(L)`; the last entry feeds the output MLP.
pub fn transformer_trace<T: Scalar>(
    x: &Matrix<T>,
    spec: &TransformerSpec<T>,
    ctx: T::Ctx,
) -> Result<Vec<Matrix<T>>, AttnError> {
    spec.validate()?;
    if x.shape() != (spec.n_tokens, spec.d_in) {
        return Err(shape(format!("input is {:?}, spec expects ({}, {})", x.shape(), spec.n_tokens, spec.d_in)));
    }
    let mut states = vec![x.clone()];
    for l in 0..spec.layers.len() {
        let next = layer_forward(states.last().expect("non-empty"), spec, l, ctx)?;
        states.push(next);
    }
    Ok(states)
}

pub fn transformer_forward<T: Scalar>(
    x: &Matrix<T>,
    spec: &TransformerSpec<T>,
    ctx: T::Ctx,
) -> Result<Matrix<T>, AttnError> {
    let states = transformer_trace(x, spec, ctx)?;
    mlp_rows(states.last().expect("non-empty"), &spec.output_mlp, ctx)
}

/// How the caller vouches for the unit logit gap.
#[derive(Debug, Clone)]
pub enum GapAssurance<T> {
    /// The construction guarantees integer logits, value entries in `{0,1,2}`.
    Certified,
    /// Check the gap and value range on these inputs under hardmax.
    SpotCheck(Vec<Matrix<T>>),
    Unknown,
}

/// `ceil(ln(3 N / ε))`.
pub fn softmax_scale(n_tokens: usize, target_error: f64) -> u64 {
    ((3.0 * n_tokens as f64 / target_error).ln().ceil()).max(0.0) as u64
}

fn verify_gap<T: Scalar>(spec: &TransformerSpec<T>, inputs: &[Matrix<T>], ctx: T::Ctx) -> Result<(), AttnError> {
    let mut hard = spec.clone();
    hard.mode = AttentionMode::Hardmax;
    let one = T::one_with(ctx);
    let two = T::from_i64(2, ctx);
    for x in inputs {
        let states = transformer_trace(x, &hard, ctx)?;
        for (l, layer) in hard.layers.iter().enumerate() {
            let xs = &states[l];
            for (h, head) in layer.heads.iter().enumerate() {
                let s = attention_logits(xs, head, ctx)?;
                for i in 0..s.rows() {
                    let r = s.row(i);
                    let mx = r.iter().fold(&r[0], |m, x| m.max_of(x)).clone();
                    let eps = default_tie_epsilon(&mx, ctx);
                    let lo = mx.sub(&eps);
                    let hi = mx.sub(&one).add(&eps);
                    if r.iter().any(|v| v.compare(&lo) == Ordering::Less && v.compare(&hi) == Ordering::Greater) {
                        return Err(AttnError::GapHypothesisUnverifiable(format!("layer {l} head {h} row {i}")));
                    }
                }
                let v = matmul(xs, &head.w_v, ctx)?;
                let ok = v.data().iter().all(|e| {
                    [T::zero_with(ctx), one.clone(), two.clone()].iter().any(|t| {
                        let d = e.sub(t).magnitude();
                        d.compare(&default_tie_epsilon(t, ctx)) != Ordering::Greater
                    })
                });
                if !ok {
                    return Err(AttnError::GapHypothesisUnverifiable(format!(
                        "layer {l} head {h}: value entries outside {{0, 1, 2}}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Scales every `W_Q` by `c = ceil(ln(3N/ε))` and switches to softmax.
///
/// Softmax and hardmax head outputs then differ by at most
/// `2 (N-1) e^-c ≤ ε` in every entry.
pub fn harden_to_softmax<T: Scalar>(
    spec: &TransformerSpec<T>,
    target_error: f64,
    gap: &GapAssurance<T>,
    ctx: T::Ctx,
) -> Result<(TransformerSpec<T>, u64), AttnError> {
    match gap {
        GapAssurance::Certified => {}
        GapAssurance::SpotCheck(xs) => verify_gap(spec, xs, ctx)?,
        GapAssurance::Unknown => {
            return Err(AttnError::GapHypothesisUnverifiable("no certificate or spot-check inputs".into()))
        }
    }
    if !(target_error > 0.0 && target_error.is_finite()) {
        return Err(AttnError::Shape(format!("target error {target_error} must be positive")));
    }
    let c = softmax_scale(spec.n_tokens, target_error);
    let cs = T::from_i64(c as i64, ctx);
    let mut out = spec.clone();
    out.mode = AttentionMode::Softmax;
    for layer in &mut out.layers {
        for head in &mut layer.heads {
            head.w_q = head.w_q.scale(&cs);
        }
    }
    Ok((out, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigfloat::Big;
    use crate::scalar::Prec;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn m(rows: Vec<Vec<f64>>) -> Matrix<f64> {
        Matrix::from_rows(rows)
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_row(&[0.0, 0.0, 0.0], ()).unwrap();
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-16));
        let s = softmax_row(&[2f64.ln(), 0.0], ()).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15 && (s[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax_row(&[f64::NAN], ()), Err(AttnError::NonFiniteInput));
        assert_eq!(softmax_row(&[1000.0, 0.0], ()).unwrap()[0], 1.0);
    }

    #[test]
    fn hardmax_examples() {
        let r = hardmax_row(&[q(1, 1), q(3, 1), q(3, 1)], ()).unwrap();
        assert_eq!(r, vec![q(0, 1), q(1, 2), q(1, 2)]);
        assert_eq!(hardmax_row(&[q(5, 1)], ()).unwrap(), vec![q(1, 1)]);
        let r = hardmax_row(&vec![q(2, 1); 7], ()).unwrap();
        assert!(r.iter().all(|v| *v == q(1, 7)));
        let r = hardmax_row(&[1.0, 1.0 + 1e-12, 0.0], ()).unwrap();
        assert_eq!(r, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn zero_logits_average_values() {
        let x = m(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let z = Matrix::zeros(2, 2, ());
        let head = HeadSpec::new(z.clone(), z, Matrix::identity(2, ())).unwrap();
        let y = attention_head(&x, &head, AttentionMode::Softmax, ()).unwrap();
        assert_eq!(y.row(0), &[2.0, 3.0]);
        assert_eq!(y.row(1), &[2.0, 3.0]);
    }

    #[test]
    fn single_token_is_value() {
        let x = m(vec![vec![0.3, -1.2]]);
        let w = m(vec![vec![1.0, 2.0], vec![0.5, -1.0]]);
        let head = HeadSpec::new(w.clone(), w.clone(), w.clone()).unwrap();
        let y = attention_head(&x, &head, AttentionMode::Softmax, ()).unwrap();
        assert_eq!(y, x.matmul(&w, ()).unwrap());
    }

    #[test]
    fn denormalized_big() {
        let p = Prec(256);
        let x = Matrix::from_rows(vec![vec![Big::from_i64(1, 256)]]);
        let w = Matrix::from_rows(vec![vec![Big::from_i64(30, 256)]]);
        let head = HeadSpec::new(w.clone(), w.clone(), Matrix::identity(1, p)).unwrap();
        let y = attention_head(&x, &head, AttentionMode::Denormalized, p).unwrap();
        let want = Big::from_i64(900, 256).exp();
        assert!(crate::bigfloat::rel_diff(y.get(0, 0), &want) < 1e-70);
        let xf = m(vec![vec![1.0]]);
        let wf = m(vec![vec![30.0]]);
        let hf = HeadSpec::new(wf.clone(), wf, m(vec![vec![1.0]])).unwrap();
        assert_eq!(
            attention_head(&xf, &hf, AttentionMode::Denormalized, ()),
            Err(AttnError::Numeric(NumError::Overflow))
        );
    }

    fn passthrough_spec(layers: usize) -> TransformerSpec<f64> {
        let z = Matrix::zeros(2, 2, ());
        TransformerSpec {
            n_tokens: 3,
            d_in: 2,
            m: 2,
            d_out: 2,
            layers: (0..layers)
                .map(|_| Layer {
                    heads: vec![HeadSpec::new(Matrix::identity(2, ()), Matrix::identity(2, ()), z.clone()).unwrap()],
                    mlp: MlpKind::Identity,
                })
                .collect(),
            output_mlp: MlpKind::Identity,
            aggregation: Aggregation::Sum,
            mode: AttentionMode::Softmax,
        }
    }

    #[test]
    fn zero_values_pass_through() {
        let x = m(vec![vec![1.0, -2.0], vec![0.5, 0.0], vec![3.0, 1.0]]);
        for l in [1, 2] {
            assert_eq!(transformer_forward(&x, &passthrough_spec(l), ()).unwrap(), x);
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = passthrough_spec(1);
        s.aggregation = Aggregation::Concat;
        let h0 = s.layers[0].heads[0].clone();
        s.layers[0].heads.push(h0.clone());
        s.layers[0].heads.push(h0);
        assert_eq!(s.validate(), Err(AttnError::IndivisibleHeads { m: 2, heads: 3 }));
        let mut s = passthrough_spec(1);
        s.d_out = 3;
        assert!(matches!(s.validate(), Err(AttnError::Shape(_))));
    }

    #[test]
    fn harden_example() {
        // logits [0, -1, -1] on row 0, values [2, 1, 1]
        let x = m(vec![vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]]);
        let wq = m(vec![vec![1.0], vec![0.0], vec![0.0]]);
        let wk = m(vec![vec![0.0], vec![-1.0], vec![0.0]]);
        let wv = m(vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let spec = TransformerSpec {
            n_tokens: 3,
            d_in: 3,
            m: 3,
            d_out: 3,
            layers: vec![Layer { heads: vec![HeadSpec::new(wq, wk, wv).unwrap()], mlp: MlpKind::Identity }],
            output_mlp: MlpKind::Identity,
            aggregation: Aggregation::Sum,
            mode: AttentionMode::Hardmax,
        };
        assert!(matches!(
            harden_to_softmax(&spec, 1e-3, &GapAssurance::Unknown, ()),
            Err(AttnError::GapHypothesisUnverifiable(_))
        ));
        let (soft, c) = harden_to_softmax(&spec, 1e-3, &GapAssurance::SpotCheck(vec![x.clone()]), ()).unwrap();
        assert_eq!(c, 10);
        let head = &soft.layers[0].heads[0];
        let y = attention_head(&x, head, AttentionMode::Softmax, ()).unwrap();
        assert!((y.get(0, 2) - 2.0).abs() <= 1e-3);
        let bad = m(vec![vec![0.5, 0.0, 2.0], vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]]);
        assert!(harden_to_softmax(&spec, 1e-3, &GapAssurance::SpotCheck(vec![bad]), ()).is_err());
    }

    #[test]
    fn mlp_shapes() {
        let w = Matrix::<f64>::zeros(3, 2, ());
        let mlp = MlpKind::Standard { w1: w.clone(), w2: Matrix::zeros(3, 2, ()), act: Activation::Relu };
        assert_eq!(mlp_apply(&[1.0, 2.0], &mlp, ()).unwrap(), vec![0.0, 0.0]);
        assert!(mlp_apply(&[1.0], &mlp, ()).is_err());
        let r = MlpKind::<f64>::RatioReadout { start: 0, len: 2, denominator: 2 };
        assert_eq!(mlp_apply(&[1.0, 3.0, 2.0], &r, ()).unwrap(), vec![0.5, 1.5]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(Activation::Sigmoid.apply(&0.0f64, ()).unwrap(), 0.5);
        assert!(Activation::Sigmoid.apply(&-800.0f64, ()).unwrap() >= 0.0);
        assert_eq!(Activation::Sigmoid.apply(&800.0f64, ()).unwrap(), 1.0);
    }
}
