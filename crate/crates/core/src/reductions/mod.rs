//! Fine-grained reductions: 3-OV through a hardmax/softmax transformer, and
//! batched matrix products recovered from the gradient of one transformer
//! circuit.

pub mod compile;
pub mod matmul;
pub mod ov;
pub mod ov3;

use std::fmt;

use crate::attention::AttnError;
use crate::autodiff::GradError;
use crate::circuit::EvalError;

pub use compile::{compile_transformer_to_eac, CompileError, CompileTarget, Entry};
pub use matmul::{
    build_rowsum_transformer, extract_matmuls, extract_matmuls_with, rowsum_transformer, sigmoid_recover,
    DerivativeBundle, GradientEfficient, MatMulBatch, MatmulExtraction, RowsumTransformer,
};
pub use ov::{brute_force_kov, split_unbalanced, OvInstance};
pub use ov3::{build_ov3_transformer, decide_ov3, Certificate, Ov3Decision, Ov3Path};

/// `L × H` factorization of a head count; head `(ℓ, h)` has index `ℓ H + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub layers: usize,
    pub heads: usize,
}

impl Layout {
    /// One layer holding every head.
    pub fn single_layer(count: usize) -> Layout {
        Layout { layers: 1, heads: count }
    }

    pub fn count(&self) -> usize {
        self.layers * self.heads
    }

    pub fn index(&self, layer: usize, head: usize) -> usize {
        layer * self.heads + head
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReductionError {
    DimensionMismatch(String),
    BadExponent(f64),
    UnequalSetSizes,
    NonPositiveDerivative { k: usize, i: usize, j: usize },
    NonInvertibleSigmaValue { layer: usize, row: usize },
    DegenerateActivation,
    Syntax { line: usize, msg: String },
    Attention(AttnError),
    Compile(CompileError),
    Eval(EvalError),
    Grad(GradError),
}

impl fmt::Display for ReductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductionError::DimensionMismatch(s) => write!(f, "dimension mismatch: {s}"),
            ReductionError::BadExponent(s) => write!(f, "exponent {s} outside (0, 1]"),
            ReductionError::UnequalSetSizes => f.write_str("splitting needs equal set sizes"),
            ReductionError::NonPositiveDerivative { k, i, j } => {
                write!(f, "non-positive derivative for product {k} entry ({i}, {j})")
            }
            ReductionError::NonInvertibleSigmaValue { layer, row } => {
                write!(f, "activation output outside its range at layer {layer}, row {row}")
            }
            ReductionError::DegenerateActivation => f.write_str("activation has sigma(0) = sigma(1)"),
            ReductionError::Syntax { line, msg } => write!(f, "line {line}: {msg}"),
            ReductionError::Attention(e) => write!(f, "{e}"),
            ReductionError::Compile(e) => write!(f, "{e}"),
            ReductionError::Eval(e) => write!(f, "{e}"),
            ReductionError::Grad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ReductionError {}

impl From<AttnError> for ReductionError {
    fn from(e: AttnError) -> Self {
        ReductionError::Attention(e)
    }
}

impl From<CompileError> for ReductionError {
    fn from(e: CompileError) -> Self {
        ReductionError::Compile(e)
    }
}

impl From<EvalError> for ReductionError {
    fn from(e: EvalError) -> Self {
        ReductionError::Eval(e)
    }
}

impl From<GradError> for ReductionError {
    fn from(e: GradError) -> Self {
        ReductionError::Grad(e)
    }
}
