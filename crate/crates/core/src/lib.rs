//! Extended arithmetic circuits, derivative circuits, degree-2 elimination,
//! attention simulation, and exact fine-grained reductions to transformers.

pub mod attention;
pub mod autodiff;
pub mod bigfloat;
pub mod circuit;
pub mod elim;
pub mod gen;
pub mod literal;
pub mod matrix;
pub mod par;
pub mod reductions;
pub mod scalar;

pub use bigfloat::Big;
pub use circuit::{Circuit, GateKind, ValidatedCircuit};
pub use matrix::Matrix;
pub use scalar::{NumError, NumericMode, Prec, Scalar, Value};
