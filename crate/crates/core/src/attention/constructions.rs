//! Weight constructions: identity MLPs, sum-to-concat conversion, and the
//! softmax wrapper for a denormalized head.

use super::{Activation, Aggregation, AttentionMode, AttnError, HeadSpec, Layer, MlpKind, TransformerSpec};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A GLU computing the identity on `R^m`, using `σ(c) ≠ 0`.
///
/// `W0 = [I/σ(c); 0]`, `W1 = [0; c·1]`, `W2 = [I; 0]`.
pub fn glu_identity<T: Scalar>(m: usize, act: Activation, c: &T, ctx: T::Ctx) -> Result<MlpKind<T>, AttnError> {
    let z = act.apply(c, ctx)?;
    if z.is_zero_value() {
        return Err(AttnError::SigmaZeroAtC);
    }
    let zi = T::one_with(ctx).div(&z)?;
    let mut w0 = Matrix::zeros(m + 1, m, ctx);
    let mut w1 = Matrix::zeros(m + 1, m, ctx);
    let mut w2 = Matrix::zeros(m + 1, m, ctx);
    for i in 0..m {
        w0.set(i, i, zi.clone());
        w1.set(m, i, c.clone());
        w2.set(i, i, T::one_with(ctx));
    }
    Ok(MlpKind::Glu { w0, w1, w2, act })
}

/// A ReLU MLP computing `relu(x) - relu(-x) = x`.
pub fn relu_identity<T: Scalar>(m: usize, ctx: T::Ctx) -> MlpKind<T> {
    let one = T::one_with(ctx);
    let neg = one.neg();
    let mut w1 = Matrix::zeros(m + 1, 2 * m, ctx);
    let mut w2 = Matrix::zeros(2 * m + 1, m, ctx);
    for i in 0..m {
        w1.set(i, i, one.clone());
        w1.set(i, m + i, neg.clone());
        w2.set(i, i, one.clone());
        w2.set(m + i, i, neg.clone());
    }
    MlpKind::Standard { w1, w2, act: Activation::Relu }
}

/// Recovers the sum-aggregated output from the concatenated one.
#[derive(Debug, Clone, PartialEq)]
pub enum Extraction<T> {
    /// Sum the `H` column blocks of width `e`, then apply the output MLP.
    Fold { heads: usize, e: usize, output_mlp: MlpKind<T> },
    /// Keep the first block of width `e`, then apply the output MLP.
    Project { e: usize, output_mlp: MlpKind<T> },
}

impl<T: Scalar> Extraction<T> {
    pub fn apply(&self, y: &Matrix<T>, ctx: T::Ctx) -> Result<Matrix<T>, AttnError> {
        let (base, mlp) = match self {
            Extraction::Fold { heads, e, output_mlp } => {
                let m = Matrix::from_fn(y.rows(), *e, |i, j| {
                    let mut acc = T::zero_with(ctx);
                    for h in 0..*heads {
                        acc = acc.add(y.get(i, h * e + j));
                    }
                    acc
                });
                (m, output_mlp)
            }
            Extraction::Project { e, output_mlp } => {
                (Matrix::from_fn(y.rows(), *e, |i, j| y.get(i, j).clone()), output_mlp)
            }
        };
        let rows: Vec<Vec<T>> =
            (0..base.rows()).map(|i| super::mlp_apply(base.row(i), mlp, ctx)).collect::<Result<_, _>>()?;
        let cols = mlp.output_dim(base.cols())?;
        Ok(Matrix::from_vec(base.rows(), cols, rows.into_iter().flatten().collect()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatConversion<T> {
    pub spec: TransformerSpec<T>,
    pub extract: Extraction<T>,
}

/// `H` identity blocks stacked vertically: `(H e) × e`.
fn stacked_identity<T: Scalar>(heads: usize, e: usize, ctx: T::Ctx) -> Matrix<T> {
    Matrix::from_fn(heads * e, e, |i, j| if i % e == j { T::one_with(ctx) } else { T::zero_with(ctx) })
}

/// `[W; 0]`: reads only the first block of a width-`rows` input.
fn first_block_reader<T: Scalar>(w: &Matrix<T>, rows: usize, ctx: T::Ctx) -> Matrix<T> {
    let mut out = Matrix::zeros(rows, w.cols(), ctx);
    out.put_block(0, 0, w);
    out
}

/// A bias-augmented weight `(e+1) × k` lifted to `(H e + 1) × k` by stacking
/// its first `e` rows once per block.
fn stack_rows<T: Scalar>(w: &Matrix<T>, heads: usize, e: usize, ctx: T::Ctx) -> Matrix<T> {
    let mut out = Matrix::zeros(heads * e + 1, w.cols(), ctx);
    for h in 0..heads {
        for i in 0..e {
            for j in 0..w.cols() {
                out.set(h * e + i, j, w.get(i, j).clone());
            }
        }
    }
    for j in 0..w.cols() {
        out.set(heads * e, j, w.get(e, j).clone());
    }
    out
}

/// Rewrites a sum-aggregated transformer with `H` heads per layer and
/// embedding `e` as a concatenation transformer with embedding `H e`.
///
/// Without MLPs the state of the new transformer folds (block sum) to the
/// old one. With MLPs every MLP writes its result into the first block and
/// zeros elsewhere, and heads read only that block.
pub fn sum_to_concat<T: Scalar>(spec: &TransformerSpec<T>, ctx: T::Ctx) -> Result<ConcatConversion<T>, AttnError> {
    spec.validate()?;
    if spec.aggregation != Aggregation::Sum {
        return Err(AttnError::Unsupported("input must use sum aggregation".into()));
    }
    let heads = spec.layers.first().map_or(0, |l| l.heads.len());
    if heads == 0 || spec.layers.iter().any(|l| l.heads.len() != heads) {
        return Err(AttnError::Unsupported("every layer needs the same nonzero head count".into()));
    }
    let e = spec.m;
    let big = heads * e;
    let plain = spec.layers.iter().all(|l| matches!(l.mlp, MlpKind::Identity));
    let fold = stacked_identity::<T>(heads, e, ctx);
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let lift = |w: &Matrix<T>| -> Result<Matrix<T>, AttnError> {
            if l == 0 {
                Ok(w.clone())
            } else if plain {
                fold.matmul(w, ctx).map_err(|err| AttnError::Shape(err.to_string()))
            } else {
                Ok(first_block_reader(w, big, ctx))
            }
        };
        let hs = layer
            .heads
            .iter()
            .map(|h| HeadSpec::new(lift(&h.w_q)?, lift(&h.w_k)?, lift(&h.w_v)?))
            .collect::<Result<Vec<_>, _>>()?;
        let mlp = match &layer.mlp {
            MlpKind::Identity if plain => MlpKind::Identity,
            MlpKind::Identity => {
                let mut w = Matrix::zeros(big + 1, big, ctx);
                w.put_block(0, 0, &stacked_identity(heads, e, ctx));
                MlpKind::Affine(w)
            }
            MlpKind::Affine(w) => MlpKind::Affine(stack_rows(w, heads, e, ctx).pad_cols(big, ctx)),
            MlpKind::Standard { w1, w2, act } => MlpKind::Standard {
                w1: stack_rows(w1, heads, e, ctx),
                w2: w2.pad_cols(big, ctx),
                act: act.clone(),
            },
            MlpKind::Glu { w0, w1, w2, act } => MlpKind::Glu {
                w0: stack_rows(w0, heads, e, ctx),
                w1: stack_rows(w1, heads, e, ctx),
                w2: w2.pad_cols(big, ctx),
                act: act.clone(),
            },
            MlpKind::RatioReadout { .. } => {
                return Err(AttnError::Unsupported("ratio readout inside a layer".into()));
            }
        };
        layers.push(Layer { heads: hs, mlp });
    }
    let extract = if plain {
        Extraction::Fold { heads, e, output_mlp: spec.output_mlp.clone() }
    } else {
        Extraction::Project { e, output_mlp: spec.output_mlp.clone() }
    };
    let out = TransformerSpec {
        n_tokens: spec.n_tokens,
        d_in: spec.d_in,
        m: big,
        d_out: big,
        layers,
        output_mlp: MlpKind::Identity,
        aggregation: Aggregation::Concat,
        mode: spec.mode,
    };
    out.validate()?;
    Ok(ConcatConversion { spec: out, extract })
}

/// Column layout of [`denormalized_wrapper`] embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WrapperLayout {
    pub d_in: usize,
    pub m_v: usize,
}

impl WrapperLayout {
    pub fn indicator(&self) -> usize {
        self.d_in
    }

    pub fn value_start(&self) -> usize {
        self.d_in + 1
    }

    pub fn denominator(&self) -> usize {
        self.d_in + 1 + self.m_v
    }

    pub fn width(&self) -> usize {
        self.d_in + self.m_v + 2
    }
}

/// A one-layer softmax transformer whose output MLP reproduces the
/// denormalized head `exp(Q K^T) V` on the first `n` rows.
///
/// Inputs are [`wrap_input`] of the original rows: an indicator column and
/// one extra all-zero token with indicator 1. For rows `i < n` the head
/// writes `(exp(QK^T)V)_i / (1 + S_i)` and `1 / (1 + S_i)`; the readout
/// divides them.
pub fn denormalized_wrapper<T: Scalar>(
    head: &HeadSpec<T>,
    n_tokens: usize,
    ctx: T::Ctx,
) -> Result<(TransformerSpec<T>, WrapperLayout), AttnError> {
    let d_in = head.input_dim();
    let lay = WrapperLayout { d_in, m_v: head.value_dim() };
    let p = head.w_q.cols();
    let mut wq = Matrix::zeros(d_in + 1, p, ctx);
    let mut wk = Matrix::zeros(d_in + 1, p, ctx);
    let mut wv = Matrix::zeros(d_in + 1, lay.width(), ctx);
    wq.put_block(0, 0, &head.w_q);
    wk.put_block(0, 0, &head.w_k);
    wv.put_block(0, lay.value_start(), &head.w_v);
    wv.set(lay.indicator(), lay.denominator(), T::one_with(ctx));
    let spec = TransformerSpec {
        n_tokens: n_tokens + 1,
        d_in: d_in + 1,
        m: lay.width(),
        d_out: lay.m_v,
        layers: vec![Layer { heads: vec![HeadSpec::new(wq, wk, wv)?], mlp: MlpKind::Identity }],
        output_mlp: MlpKind::RatioReadout { start: lay.value_start(), len: lay.m_v, denominator: lay.denominator() },
        aggregation: Aggregation::Sum,
        mode: AttentionMode::Softmax,
    };
    spec.validate()?;
    Ok((spec, lay))
}

/// `[[X, 0], [0, 1]]`.
pub fn wrap_input<T: Scalar>(x: &Matrix<T>, ctx: T::Ctx) -> Matrix<T> {
    let mut out = Matrix::zeros(x.rows() + 1, x.cols() + 1, ctx);
    out.put_block(0, 0, x);
    out.set(x.rows(), x.cols(), T::one_with(ctx));
    out
}

/// First `n` rows of `y`.
pub fn unwrap_output<T: Scalar>(y: &Matrix<T>, n: usize) -> Matrix<T> {
    Matrix::from_fn(n, y.cols(), |i, j| y.get(i, j).clone())
}

#[cfg(test)]
mod tests {
    use super::super::{attention_head, mlp_apply, transformer_forward};
    use super::*;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn relu_identity_exact() {
        let mlp = relu_identity::<BigRational>(5, ());
        let x = vec![q(-3, 2), q(0, 1), q(7, 3), q(-1, 9), q(4, 1)];
        assert_eq!(mlp_apply(&x, &mlp, ()).unwrap(), x);
    }

    #[test]
    fn glu_identity_sigmoid() {
        let mlp = glu_identity::<f64>(3, Activation::Sigmoid, &0.0, ()).unwrap();
        let x = [0.25, -1.5, 3.0];
        assert_eq!(mlp_apply(&x, &mlp, ()).unwrap(), x.to_vec());
        assert_eq!(glu_identity::<f64>(2, Activation::Relu, &-1.0, ()), Err(AttnError::SigmaZeroAtC));
    }

    #[test]
    fn wrapper_zero_logits() {
        // Q = K = 0: denormalized output is the column sums of V
        let x = Matrix::from_rows(vec![vec![q(1, 1), q(2, 1)], vec![q(-1, 1), q(3, 1)]]);
        let z = Matrix::zeros(2, 1, ());
        let head = HeadSpec::new(z.clone(), z, Matrix::identity(2, ())).unwrap();
        let (spec, _) = denormalized_wrapper(&head, 2, ()).unwrap();
        let y = transformer_forward(&wrap_input(&x, ()), &spec, ()).unwrap();
        let y = unwrap_output(&y, 2);
        let d = attention_head(&x, &head, AttentionMode::Denormalized, ()).unwrap();
        assert_eq!(y, d);
        assert_eq!(y.row(0), &[q(0, 1), q(5, 1)]);
    }
}
