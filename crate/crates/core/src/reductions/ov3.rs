//! 3-OV decided by one transformer evaluation.
//!
//! Tokens are `(a_i, b_i, 1, 0)` for `i < N` plus a sentinel `(0, 0, 2, 0)`.
//! Head `k` scores `-Σ a_i[t] b_j[t] c_k[t]`, so under hardmax row `i`
//! averages the value column over the sentinel and every `j` with
//! `a_i ⊥ b_j ⊥ c_k`. That gives `(t + 2) / (t + 1)` with `t` such partners,
//! and the last column accumulates it over all heads and layers.

use num_rational::BigRational;
use num_traits::Zero;

use super::{Layout, OvInstance, ReductionError};
use crate::attention::{
    harden_to_softmax, transformer_forward, Aggregation, AttentionMode, AttnError, GapAssurance, HeadSpec, Layer,
    MlpKind, TransformerSpec,
};
use crate::bigfloat::Big;
use crate::matrix::Matrix;
use crate::scalar::{NumError, Prec, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ov3Path {
    /// Hardmax attention in exact rational arithmetic.
    HardmaxExact,
    /// Scaled softmax attention in f64 (big floats on overflow).
    SoftmaxFloat,
}

impl std::str::FromStr for Ov3Path {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hardmax" | "hardmax-exact" => Ok(Ov3Path::HardmaxExact),
            "softmax" | "softmax-float" => Ok(Ov3Path::SoftmaxFloat),
            _ => Err(format!("unknown path `{s}`")),
        }
    }
}

impl std::fmt::Display for Ov3Path {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ov3Path::HardmaxExact => "hardmax",
            Ov3Path::SoftmaxFloat => "softmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    Exact(BigRational),
    Float(f64),
}

impl Certificate {
    pub fn to_f64(&self) -> f64 {
        match self {
            Certificate::Exact(q) => crate::literal::rational_to_f64(q),
            Certificate::Float(v) => *v,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Certificate::Exact(q) => crate::literal::format_exact(q),
            Certificate::Float(v) => format!("{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ov3Decision {
    pub yes: bool,
    pub certificate: Certificate,
    /// `2 N H L`.
    pub no_value: u64,
    pub threshold: f64,
    pub layout: Layout,
    /// Softmax scale, when the softmax path ran.
    pub scale: Option<u64>,
    /// True when the softmax path fell back to big floats.
    pub big_fallback: bool,
}

fn ratio(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

/// Builds the transformer and its input for `A`, `B` (`N` vectors each) and
/// `C` (`L H` vectors), all in `{0,1}^d`.
pub fn build_ov3_transformer(
    a: &[Vec<bool>],
    b: &[Vec<bool>],
    c: &[Vec<bool>],
    d: usize,
    layout: Layout,
) -> Result<(TransformerSpec<BigRational>, Matrix<BigRational>), ReductionError> {
    let n = a.len();
    if b.len() != n {
        return Err(ReductionError::DimensionMismatch(format!("|A| = {n} but |B| = {}", b.len())));
    }
    if c.len() != layout.count() {
        return Err(ReductionError::DimensionMismatch(format!(
            "|C| = {} but L H = {}",
            c.len(),
            layout.count()
        )));
    }
    if let Some(v) = a.iter().chain(b).chain(c).find(|v| v.len() != d) {
        return Err(ReductionError::DimensionMismatch(format!("vector of length {} with d = {d}", v.len())));
    }
    let m = 2 * d + 2;
    let bit = |x: bool| ratio(x as i64);
    let mut x = Matrix::filled(n + 1, m, BigRational::zero());
    for i in 0..n {
        for t in 0..d {
            x.set(i, t, bit(a[i][t]));
            x.set(i, d + t, bit(b[i][t]));
        }
        x.set(i, 2 * d, ratio(1));
    }
    x.set(n, 2 * d, ratio(2));
    let mut wq = Matrix::filled(m, d, BigRational::zero());
    for t in 0..d {
        wq.set(t, t, ratio(-1));
    }
    let mut wv = Matrix::filled(m, m, BigRational::zero());
    wv.set(2 * d, 2 * d + 1, ratio(1));
    let layers = (0..layout.layers)
        .map(|l| {
            let heads = (0..layout.heads)
                .map(|h| {
                    let ck = &c[layout.index(l, h)];
                    let mut wk = Matrix::filled(m, d, BigRational::zero());
                    for t in 0..d {
                        wk.set(d + t, t, bit(ck[t]));
                    }
                    HeadSpec { w_q: wq.clone(), w_k: wk, w_v: wv.clone() }
                })
                .collect();
            Layer { heads, mlp: MlpKind::Identity }
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
        mode: AttentionMode::Hardmax,
    };
    spec.validate()?;
    Ok((spec, x))
}

/// `Σ_{i<N} Y[i][2d+1]`.
fn certificate_sum<T: Scalar>(y: &Matrix<T>, n: usize, col: usize, ctx: T::Ctx) -> T {
    (0..n).fold(T::zero_with(ctx), |acc, i| acc.add(y.get(i, col)))
}

/// `1 / (10 N H L)`.
pub fn softmax_target_error(n: usize, layout: Layout) -> f64 {
    1.0 / (10.0 * (n * layout.count()) as f64)
}

fn validate_instance(inst: &OvInstance, layout: Layout) -> Result<(), ReductionError> {
    if inst.k != 3 {
        return Err(ReductionError::DimensionMismatch(format!("expected a 3-OV instance, got k = {}", inst.k)));
    }
    if layout.count() != inst.sets[2].len() || layout.count() == 0 {
        return Err(ReductionError::DimensionMismatch(format!(
            "|C| = {} does not factor as {} x {}",
            inst.sets[2].len(),
            layout.layers,
            layout.heads
        )));
    }
    Ok(())
}

/// Decides a 3-OV instance through the transformer.
///
/// Hardmax: yes iff the certificate is below `2 N H L` (a no-instance gives
/// exactly that; a yes-instance at most `2 N H L - 1/2`). Softmax: `W_Q` is
/// scaled for error `1/(10 N H L)` per head and the threshold is
/// `2 N H L - 1/4`.
pub fn decide_ov3(inst: &OvInstance, path: Ov3Path, layout: Option<Layout>) -> Result<Ov3Decision, ReductionError> {
    if inst.k != 3 {
        return Err(ReductionError::DimensionMismatch(format!("expected a 3-OV instance, got k = {}", inst.k)));
    }
    let layout = layout.unwrap_or(Layout::single_layer(inst.sets[2].len()));
    validate_instance(inst, layout)?;
    let (spec, x) = build_ov3_transformer(&inst.sets[0], &inst.sets[1], &inst.sets[2], inst.d, layout)?;
    let n = inst.sets[0].len();
    let col = 2 * inst.d + 1;
    let no_value = 2 * (n * layout.count()) as u64;
    match path {
        Ov3Path::HardmaxExact => {
            let y = transformer_forward(&x, &spec, ())?;
            let cert = certificate_sum(&y, n, col, ());
            let yes = cert < ratio(no_value as i64);
            Ok(Ov3Decision {
                yes,
                certificate: Certificate::Exact(cert),
                no_value,
                threshold: no_value as f64,
                layout,
                scale: None,
                big_fallback: false,
            })
        }
        Ov3Path::SoftmaxFloat => {
            let eps = softmax_target_error(n, layout);
            let threshold = no_value as f64 - 0.25;
            let fspec = spec.map(crate::literal::rational_to_f64);
            let fx = x.map(crate::literal::rational_to_f64);
            let (soft, c) = harden_to_softmax(&fspec, eps, &GapAssurance::Certified, ())?;
            let (cert, big_fallback) = match transformer_forward(&fx, &soft, ()) {
                Ok(y) => (certificate_sum(&y, n, col, ()), false),
                Err(AttnError::Numeric(NumError::Overflow)) => {
                    let p = Prec::default();
                    let bspec = spec.map(|q| Big::from_rational(q, p.0));
                    let bx = x.map(|q| Big::from_rational(q, p.0));
                    let (bsoft, _) = harden_to_softmax(&bspec, eps, &GapAssurance::Certified, p)?;
                    let y = transformer_forward(&bx, &bsoft, p)?;
                    (certificate_sum(&y, n, col, p).to_f64(), true)
                }
                Err(e) => return Err(e.into()),
            };
            Ok(Ov3Decision {
                yes: cert < threshold,
                certificate: Certificate::Float(cert),
                no_value,
                threshold,
                layout,
                scale: Some(c),
                big_fallback,
            })
        }
    }
}
