//! Batched matrix products recovered from the gradient of one row-sum
//! transformer circuit.
//!
//! Head `k` attends with logits `(A_k B_k^T + C_k)_{ij}` over `N` tokens plus
//! a sentinel with logit 0, so row `i` sees `S_ki = Σ_j exp(·)` and
//! `1 + S_ki` as its normalizer. With `f = Σ_i Y[i][0]` and
//! `g = Σ_i Y[i][i+1]`, at `C = 0`, `D = 1`:
//!
//! ```text
//! ∂f/∂C_kij = exp((A_k B_k^T)_ij) / (1 + S_ki)^2
//! ∂g/∂D_ki  = 1 / (1 + S_ki)
//! ```
//!
//! so `(A_k B_k^T)_ij = ln ∂f/∂C_kij - 2 ln ∂g/∂D_ki`.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use super::compile::{compile_transformer_to_eac, CompileTarget, Entry};
use super::{Layout, ReductionError};
use crate::attention::{
    transformer_forward, Activation, Aggregation, AttentionMode, HeadSpec, Layer, MlpKind, TransformerSpec,
};
use crate::autodiff::gradient_circuit;
use crate::bigfloat::Big;
use crate::circuit::{evaluate_with, ValidatedCircuit};
use crate::literal;
use crate::matrix::{content_lines, read_matrix, write_matrix, Matrix, MatrixTextError};
use crate::par;
use crate::scalar::{Prec, Scalar};

/// `LH` pairs `(A_k, B_k)` of `N × N` matrices with auxiliary `C_k`
/// (default 0) and `D_k` (default 1).
#[derive(Debug, Clone, PartialEq)]
pub struct MatMulBatch {
    pub n: usize,
    pub a: Vec<Matrix<BigRational>>,
    pub b: Vec<Matrix<BigRational>>,
    pub c: Vec<Matrix<BigRational>>,
    pub d: Vec<Vec<BigRational>>,
}

fn syntax(e: MatrixTextError) -> ReductionError {
    match e {
        MatrixTextError::Syntax { line, msg } => ReductionError::Syntax { line, msg },
        MatrixTextError::Literal { line, err } => ReductionError::Syntax { line, msg: err.to_string() },
    }
}

impl MatMulBatch {
    pub fn new(a: Vec<Matrix<BigRational>>, b: Vec<Matrix<BigRational>>) -> Result<Self, ReductionError> {
        let n = a.first().map_or(0, Matrix::rows);
        if a.is_empty() || a.len() != b.len() {
            return Err(ReductionError::DimensionMismatch(format!("{} A blocks and {} B blocks", a.len(), b.len())));
        }
        if let Some(m) = a.iter().chain(&b).find(|m| m.shape() != (n, n)) {
            return Err(ReductionError::DimensionMismatch(format!("block {:?} in a batch of {n} x {n}", m.shape())));
        }
        let lh = a.len();
        Ok(MatMulBatch {
            n,
            a,
            b,
            c: vec![Matrix::filled(n, n, BigRational::zero()); lh],
            d: vec![vec![BigRational::one(); n]; lh],
        })
    }

    pub fn lh(&self) -> usize {
        self.a.len()
    }

    /// Entries uniform on the grid `k / 10^6` in `[-1, 1]`.
    pub fn random(lh: usize, n: usize, rng: &mut impl Rng) -> Self {
        let scale = num_bigint::BigInt::from(1_000_000);
        let mut m = || {
            Matrix::from_fn(n, n, |_, _| BigRational::new(rng.gen_range(-1_000_000i64..=1_000_000).into(), scale.clone()))
        };
        let a: Vec<_> = (0..lh).map(|_| m()).collect();
        let b: Vec<_> = (0..lh).map(|_| m()).collect();
        MatMulBatch::new(a, b).expect("square blocks")
    }

    pub fn zeros(lh: usize, n: usize) -> Self {
        let z = Matrix::filled(n, n, BigRational::zero());
        MatMulBatch::new(vec![z.clone(); lh], vec![z; lh]).expect("square blocks")
    }

    /// Exact `A_k B_k^T` for every `k`.
    pub fn products(&self) -> Vec<Matrix<BigRational>> {
        self.a.iter().zip(&self.b).map(|(a, b)| a.matmul(&b.transpose(), ()).expect("square")).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("mmbatch {} {}\n", self.lh(), self.n);
        for (a, b) in self.a.iter().zip(&self.b) {
            write_matrix(&a.map(literal::format_exact), &mut s);
            write_matrix(&b.map(literal::format_exact), &mut s);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ReductionError> {
        let mut lines = content_lines(text).peekable();
        let (hl, header) =
            lines.next().ok_or(ReductionError::Syntax { line: 1, msg: "empty batch".into() })?;
        let (lh, n) = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["mmbatch", lh, n] => match (lh.parse::<usize>(), n.parse::<usize>()) {
                (Ok(lh), Ok(n)) => (lh, n),
                _ => return Err(ReductionError::Syntax { line: hl, msg: "bad `mmbatch` header".into() }),
            },
            _ => return Err(ReductionError::Syntax { line: hl, msg: "expected `mmbatch <LH> <N>`".into() }),
        };
        let mut a = Vec::with_capacity(lh);
        let mut b = Vec::with_capacity(lh);
        for _ in 0..lh {
            for dst in [&mut a, &mut b] {
                let line = lines.peek().map_or(hl, |l| l.0);
                let m = read_matrix(&mut lines).map_err(syntax)?;
                if m.shape() != (n, n) {
                    return Err(ReductionError::Syntax { line, msg: format!("expected a {n} x {n} block") });
                }
                dst.push(m.map(|s| literal::parse_rational(s).expect("checked on read")));
            }
        }
        if let Some((line, _)) = lines.next() {
            return Err(ReductionError::Syntax { line, msg: "trailing content".into() });
        }
        MatMulBatch::new(a, b)
    }

    /// Circuit inputs per head: `A_k`, `B_k`, `C_k` row-major, then `D_k`.
    pub fn input_arity(&self) -> usize {
        self.lh() * stride(self.n)
    }

    /// Input vector with this batch's `C` and `D`.
    pub fn inputs(&self) -> Vec<BigRational> {
        self.assemble(&self.c, &self.d)
    }

    /// Input vector at `C = 0`, `D = 1`.
    pub fn eval_point(&self) -> Vec<BigRational> {
        let n = self.n;
        let c = vec![Matrix::filled(n, n, BigRational::zero()); self.lh()];
        let d = vec![vec![BigRational::one(); n]; self.lh()];
        self.assemble(&c, &d)
    }

    fn assemble(&self, c: &[Matrix<BigRational>], d: &[Vec<BigRational>]) -> Vec<BigRational> {
        let mut v = Vec::with_capacity(self.input_arity());
        for k in 0..self.lh() {
            v.extend(self.a[k].data().iter().cloned());
            v.extend(self.b[k].data().iter().cloned());
            v.extend(c[k].data().iter().cloned());
            v.extend(d[k].iter().cloned());
        }
        v
    }
}

fn stride(n: usize) -> usize {
    3 * n * n + n
}

fn a_index(n: usize, k: usize, i: usize, j: usize) -> usize {
    k * stride(n) + i * n + j
}

fn b_index(n: usize, k: usize, i: usize, j: usize) -> usize {
    k * stride(n) + n * n + i * n + j
}

fn c_index(n: usize, k: usize, i: usize, j: usize) -> usize {
    k * stride(n) + 2 * n * n + i * n + j
}

fn d_index(n: usize, k: usize, i: usize) -> usize {
    k * stride(n) + 3 * n * n + i
}

/// The row-sum transformer with weights as circuit inputs.
#[derive(Debug, Clone)]
pub struct RowsumTransformer {
    pub spec: TransformerSpec<Entry>,
    pub x: Matrix<Entry>,
    pub n: usize,
    pub layout: Layout,
    pub input_arity: usize,
}

impl RowsumTransformer {
    /// Spec and input with every circuit input replaced by its value.
    pub fn instantiate<T: Scalar>(&self, inputs: &[T], ctx: T::Ctx) -> (TransformerSpec<T>, Matrix<T>) {
        (self.spec.map(|e| e.instantiate(inputs, ctx)), self.x.map(|e| e.instantiate(inputs, ctx)))
    }

    /// `f = Σ_i Y[i][0]` and `g = Σ_i Y[i][i+1]` over the `N` non-sentinel rows.
    pub fn functionals(&self) -> [Vec<(usize, usize)>; 2] {
        [(0..self.n).map(|i| (i, 0)).collect(), (0..self.n).map(|i| (i, i + 1)).collect()]
    }
}

/// Layer MLP that applies `σ` to the accumulator columns `0..=N` and keeps
/// the 0/1 columns via `(σ(x) - σ(0)) / (σ(1) - σ(0))`.
fn sigmoid_mlp(n: usize, m: usize, act: &Activation) -> Result<MlpKind<Entry>, ReductionError> {
    let p = Prec(512);
    let s0 = act.apply(&Big::zero(p.0), p)?.to_rational();
    let s1 = act.apply(&Big::one(p.0), p)?.to_rational();
    if s0 == s1 {
        return Err(ReductionError::DegenerateActivation);
    }
    let c1 = (&s1 - &s0).recip();
    let c2 = -(&s0 * &c1);
    let w1 = Matrix::from_fn(m + 1, m, |i, j| Entry::int((i == j) as i64));
    let w2 = Matrix::from_fn(m + 1, m, |i, j| {
        if j <= n {
            Entry::int((i == j) as i64)
        } else if i == j {
            Entry::Const(c1.clone())
        } else if i == m {
            Entry::Const(c2.clone())
        } else {
            Entry::zero()
        }
    });
    Ok(MlpKind::Standard { w1, w2, act: act.clone() })
}

/// Token `i < N` is `(0, e_i, 1, 0)`, the sentinel `(0, 0, 0, 1)`, width
/// `2N + 3`. Head `k` reads `(A_k | C_k)` as queries, `(B_k | I)` as keys,
/// and writes `1` (tokens) or `D_k` (sentinel) into columns `0..=N`.
pub fn rowsum_transformer(
    n: usize,
    layout: Layout,
    sigma: Option<&Activation>,
) -> Result<RowsumTransformer, ReductionError> {
    if n == 0 || layout.count() == 0 {
        return Err(ReductionError::DimensionMismatch("empty batch".into()));
    }
    let m = 2 * n + 3;
    let one_col = 2 * n + 1;
    let sentinel_col = 2 * n + 2;
    let x = Matrix::from_fn(n + 1, m, |i, j| {
        let hot = if i < n { j == n + 1 + i || j == one_col } else { j == sentinel_col };
        Entry::int(hot as i64)
    });
    let mlp = match sigma {
        Some(act) => sigmoid_mlp(n, m, act)?,
        None => MlpKind::Identity,
    };
    let layers = (0..layout.layers)
        .map(|l| {
            let heads = (0..layout.heads)
                .map(|h| {
                    let k = layout.index(l, h);
                    let w_q = Matrix::from_fn(m, 2 * n, |r, t| match r.checked_sub(n + 1) {
                        Some(i) if i < n && t < n => Entry::Input(a_index(n, k, i, t)),
                        Some(i) if i < n => Entry::Input(c_index(n, k, i, t - n)),
                        _ => Entry::zero(),
                    });
                    let w_k = Matrix::from_fn(m, 2 * n, |r, t| match r.checked_sub(n + 1) {
                        Some(j) if j < n && t < n => Entry::Input(b_index(n, k, j, t)),
                        Some(j) if j < n => Entry::int((t - n == j) as i64),
                        _ => Entry::zero(),
                    });
                    let w_v = Matrix::from_fn(m, m, |r, c| {
                        if r == one_col && c == 0 {
                            Entry::int(1)
                        } else if r == sentinel_col && (1..=n).contains(&c) {
                            Entry::Input(d_index(n, k, c - 1))
                        } else {
                            Entry::zero()
                        }
                    });
                    HeadSpec { w_q, w_k, w_v }
                })
                .collect();
            Layer { heads, mlp: mlp.clone() }
        })
        .collect();
    let spec = TransformerSpec {
        n_tokens: n + 1,
        d_in: m,
        m,
        d_out: m,
        layers,
        output_mlp: MlpKind::Identity,
        aggregation: Aggregation::Sum,
        mode: AttentionMode::Softmax,
    };
    spec.validate()?;
    Ok(RowsumTransformer { spec, x, n, layout, input_arity: layout.count() * stride(n) })
}

/// One layer holding all `LH` heads, identity MLPs.
pub fn build_rowsum_transformer(batch: &MatMulBatch) -> Result<RowsumTransformer, ReductionError> {
    rowsum_transformer(batch.n, Layout::single_layer(batch.lh()), None)
}

/// `∂f/∂C_kij` and `∂g/∂D_ki` at the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle<T> {
    pub df_dc: Vec<Matrix<T>>,
    pub dg_dd: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct MatmulExtraction<T> {
    pub products: Vec<Matrix<T>>,
    pub bundle: DerivativeBundle<T>,
    /// Operation gates in the compiled `f` and `g` circuits.
    pub transformer_size: usize,
    /// Operation gates in their two gradient circuits.
    pub gradient_size: usize,
}

impl<T> MatmulExtraction<T> {
    pub fn ratio(&self) -> f64 {
        self.gradient_size as f64 / self.transformer_size.max(1) as f64
    }
}

struct Gradients<T> {
    /// `[f, ∇f]` and `[g, ∇g]` at the evaluation point.
    f: Vec<T>,
    g: Vec<T>,
    transformer_size: usize,
    gradient_size: usize,
}

fn gradients<T: Scalar>(rt: &RowsumTransformer, point: &[T], ctx: T::Ctx) -> Result<Gradients<T>, ReductionError> {
    let targets = rt.functionals();
    let runs = par::map(&targets, |t| -> Result<(Vec<T>, usize, usize), ReductionError> {
        let c = compile_transformer_to_eac(&rt.spec, &rt.x, rt.input_arity, &CompileTarget::Functionals(vec![t.clone()]))?;
        let grad = gradient_circuit(&c)?;
        let (s, gs) = (c.circuit().size(), grad.size());
        let gc: ValidatedCircuit = grad.circuit.validate().expect("gradient circuits are well formed");
        Ok((evaluate_with(&gc, point, ctx)?.outputs, s, gs))
    });
    let mut it = runs.into_iter();
    let (f, fs, fgs) = it.next().expect("two runs")?;
    let (g, gs, ggs) = it.next().expect("two runs")?;
    Ok(Gradients { f, g, transformer_size: fs + gs, gradient_size: fgs + ggs })
}

fn positive<T: Scalar>(v: &T, ctx: T::Ctx) -> bool {
    v.compare(&T::zero_with(ctx)) == std::cmp::Ordering::Greater
}

/// Recovers every `A_k B_k^T` from the gradients of `f` and `g`.
pub fn extract_matmuls_with<T: Scalar>(batch: &MatMulBatch, ctx: T::Ctx) -> Result<MatmulExtraction<T>, ReductionError> {
    let rt = build_rowsum_transformer(batch)?;
    let n = batch.n;
    let point: Vec<T> = batch.eval_point().iter().map(|q| T::from_rational(q, ctx)).collect();
    let gr = gradients(&rt, &point, ctx)?;
    let mut bundle = DerivativeBundle { df_dc: Vec::new(), dg_dd: Vec::new() };
    let mut products = Vec::with_capacity(batch.lh());
    for k in 0..batch.lh() {
        let dc = Matrix::from_fn(n, n, |i, j| gr.f[1 + c_index(n, k, i, j)].clone());
        let dd: Vec<T> = (0..n).map(|i| gr.g[1 + d_index(n, k, i)].clone()).collect();
        let mut p = Matrix::filled(n, n, T::zero_with(ctx));
        for i in 0..n {
            if !positive(&dd[i], ctx) {
                return Err(ReductionError::NonPositiveDerivative { k, i, j: n });
            }
            let lg = dd[i].ln().map_err(|_| ReductionError::NonPositiveDerivative { k, i, j: n })?;
            for j in 0..n {
                let v = dc.get(i, j);
                if !positive(v, ctx) {
                    return Err(ReductionError::NonPositiveDerivative { k, i, j });
                }
                let lf = v.ln().map_err(|_| ReductionError::NonPositiveDerivative { k, i, j })?;
                p.set(i, j, lf.sub(&lg.add(&lg)));
            }
        }
        products.push(p);
        bundle.df_dc.push(dc);
        bundle.dg_dd.push(dd);
    }
    Ok(MatmulExtraction { products, bundle, transformer_size: gr.transformer_size, gradient_size: gr.gradient_size })
}

/// [`extract_matmuls_with`] in 256-bit floats.
pub fn extract_matmuls(batch: &MatMulBatch) -> Result<MatmulExtraction<Big>, ReductionError> {
    extract_matmuls_with::<Big>(batch, Prec::default())
}

type BigFn<R> = Arc<dyn Fn(&Big) -> R + Send + Sync>;

/// An activation with `σ'(x) = h(σ(x))` and a partial inverse.
#[derive(Clone)]
pub struct GradientEfficient {
    pub act: Activation,
    pub h: BigFn<Big>,
    pub inv: BigFn<Option<Big>>,
}

impl fmt::Debug for GradientEfficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientEfficient").field("act", &self.act).finish_non_exhaustive()
    }
}

impl GradientEfficient {
    /// `σ(x) = 1/(1+e^-x)`, `h(y) = y(1-y)`, `σ^-1(y) = ln(y/(1-y))`.
    pub fn logistic() -> Self {
        GradientEfficient {
            act: Activation::Sigmoid,
            h: Arc::new(|y: &Big| y.mul(&Big::one(y.precision()).sub(y))),
            inv: Arc::new(|y: &Big| {
                let one_minus = Big::one(y.precision()).sub(y);
                if !y.is_positive() || !one_minus.is_positive() {
                    return None;
                }
                y.div(&one_minus)?.ln()
            }),
        }
    }
}

/// Recovers the products from a transformer with `L` layers of `H` heads and
/// a sigmoid MLP after each layer.
///
/// Walks the layers backwards: divides the gradients by the accumulated
/// `σ'` factors, applies the one-layer formula, then undoes `σ` and the
/// layer's head contributions to reach the previous layer's values.
pub fn sigmoid_recover(
    batch: &MatMulBatch,
    layout: Layout,
    sigma: &GradientEfficient,
    prec: Prec,
) -> Result<Vec<Matrix<Big>>, ReductionError> {
    if layout.count() != batch.lh() {
        return Err(ReductionError::DimensionMismatch(format!(
            "{} products for {} x {} heads",
            batch.lh(),
            layout.layers,
            layout.heads
        )));
    }
    let rt = rowsum_transformer(batch.n, layout, Some(&sigma.act))?;
    let n = batch.n;
    let point: Vec<Big> = batch.eval_point().iter().map(|q| Big::from_rational(q, prec.0)).collect();
    let gr = gradients(&rt, &point, prec)?;
    let (spec, x) = rt.instantiate(&point, prec);
    let y = transformer_forward(&x, &spec, prec)?;

    let one = Big::one(prec.0);
    let mut cur_f: Vec<Big> = (0..n).map(|i| y.get(i, 0).clone()).collect();
    let mut cur_g: Vec<Big> = (0..n).map(|i| y.get(i, i + 1).clone()).collect();
    let mut fac_f = vec![one.clone(); n];
    let mut fac_g = vec![one.clone(); n];
    let mut products = vec![Matrix::filled(n, n, Big::zero(prec.0)); batch.lh()];
    for l in (0..layout.layers).rev() {
        for i in 0..n {
            fac_f[i] = fac_f[i].mul(&(sigma.h)(&cur_f[i]));
            fac_g[i] = fac_g[i].mul(&(sigma.h)(&cur_g[i]));
        }
        let mut head_f = vec![Big::zero(prec.0); n];
        let mut head_g = vec![Big::zero(prec.0); n];
        for h in 0..layout.heads {
            let k = layout.index(l, h);
            for i in 0..n {
                let pg = gr.g[1 + d_index(n, k, i)].div(&fac_g[i]);
                let pg = pg.filter(Big::is_positive).ok_or(ReductionError::NonPositiveDerivative { k, i, j: n })?;
                let lg = pg.ln().ok_or(ReductionError::NonPositiveDerivative { k, i, j: n })?;
                for j in 0..n {
                    let pf = gr.f[1 + c_index(n, k, i, j)]
                        .div(&fac_f[i])
                        .and_then(|v| v.ln())
                        .ok_or(ReductionError::NonPositiveDerivative { k, i, j })?;
                    products[k].set(i, j, pf.sub(&lg.add(&lg)));
                }
                // 1/(1+S) is pg; S/(1+S) = 1 - pg
                head_f[i] = head_f[i].add(&one.sub(&pg));
                head_g[i] = head_g[i].add(&pg);
            }
        }
        if l > 0 {
            for i in 0..n {
                let inv = |v: &Big| (sigma.inv)(v).ok_or(ReductionError::NonInvertibleSigmaValue { layer: l, row: i });
                cur_f[i] = inv(&cur_f[i])?.sub(&head_f[i]);
                cur_g[i] = inv(&cur_g[i])?.sub(&head_g[i]);
            }
        }
    }
    Ok(products)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn max_err(got: &[Matrix<Big>], want: &[Matrix<BigRational>]) -> f64 {
        got.iter()
            .zip(want)
            .flat_map(|(g, w)| g.data().iter().zip(w.data()).map(|(g, w)| (g.to_f64() - literal::rational_to_f64(w)).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_entry_forward() {
        let batch = MatMulBatch::zeros(1, 1);
        let rt = build_rowsum_transformer(&batch).unwrap();
        let (spec, x) = rt.instantiate(&batch.inputs().iter().map(literal::rational_to_f64).collect::<Vec<_>>(), ());
        let y = transformer_forward(&x, &spec, ()).unwrap();
        assert!((y.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((y.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_d_clears_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut batch = MatMulBatch::random(2, 3, &mut rng);
        batch.d = vec![vec![BigRational::zero(); 3]; 2];
        let rt = build_rowsum_transformer(&batch).unwrap();
        let (spec, x) = rt.instantiate(&batch.inputs(), ());
        let y = transformer_forward(&x, &spec, ()).unwrap();
        for i in 0..3 {
            for j in 1..=3 {
                assert!(y.get(i, j).is_zero());
            }
        }
    }

    #[test]
    fn single_entry_bundle() {
        let r = extract_matmuls(&MatMulBatch::zeros(1, 1)).unwrap();
        assert!((r.bundle.df_dc[0].get(0, 0).to_f64() - 0.25).abs() < 1e-30);
        assert!((r.bundle.dg_dd[0][0].to_f64() - 0.5).abs() < 1e-30);
        assert!(r.products[0].get(0, 0).to_f64().abs() < 1e-60);
    }

    #[test]
    fn recovers_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = MatMulBatch::random(2, 3, &mut rng);
        let r = extract_matmuls(&batch).unwrap();
        assert!(max_err(&r.products, &batch.products()) < 1e-40);
        let f = extract_matmuls_with::<f64>(&batch, ()).unwrap();
        for (g, w) in f.products.iter().zip(batch.products()) {
            for (g, w) in g.data().iter().zip(w.data()) {
                assert!((g - literal::rational_to_f64(w)).abs() < 1e-9);
            }
        }
        assert!(r.gradient_size > r.transformer_size);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = MatMulBatch::random(2, 2, &mut rng);
        assert_eq!(MatMulBatch::from_text(&batch.to_text()).unwrap(), batch);
        let bad = "mmbatch 1 2\nmat 2 2\n1 0\n0 1\nmat 1 2\n1 1\n";
        assert!(matches!(MatMulBatch::from_text(bad), Err(ReductionError::Syntax { line: 5, .. })));
        assert!(MatMulBatch::from_text("mmbatch 1 1\nmat 1 1\n1/2\n").is_err());
        let b = MatMulBatch::from_text("mmbatch 1 1\nmat 1 1\n1/2\nmat 1 1\n-3\n").unwrap();
        assert_eq!(b.products()[0].get(0, 0), &q(-3, 2));
    }

    #[test]
    fn sigmoid_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sig = GradientEfficient::logistic();
        for layout in [Layout { layers: 1, heads: 2 }, Layout { layers: 2, heads: 1 }] {
            let batch = MatMulBatch::random(2, 2, &mut rng);
            let got = sigmoid_recover(&batch, layout, &sig, Prec::default()).unwrap();
            assert!(max_err(&got, &batch.products()) < 1e-30, "{layout:?}");
        }
    }

    #[test]
    fn degenerate_sigma() {
        use crate::circuit::{Circuit, GateKind};
        let c = Circuit { input_arity: 1, gates: vec![GateKind::Input(0), GateKind::Const("1/2".into())], outputs: vec![1] };
        let c = c.validate().unwrap();
        let act = Activation::custom(c).unwrap();
        let sig = GradientEfficient { act, ..GradientEfficient::logistic() };
        let batch = MatMulBatch::zeros(1, 1);
        assert!(matches!(
            sigmoid_recover(&batch, Layout::single_layer(1), &sig, Prec::default()),
            Err(ReductionError::DegenerateActivation)
        ));
    }
}
