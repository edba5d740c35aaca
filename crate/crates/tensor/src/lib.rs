//! Dense n-dimensional tensors with reverse-mode automatic differentiation,
//! counter-based random streams, and the small linear-algebra kernels
//! (radix-2 FFT, Jacobi SVD, softmax, normalizations) the rest of the
//! workspace builds on.
//!
//! The core is generic over the scalar type; concrete `f64` aliases are
//! exported at the crate root and are what the model crates use.

pub mod check;
pub mod fft;
pub mod linalg;
pub mod ops;
pub mod param;
pub mod rng;
pub mod tape;
pub mod tensor;

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use param::{Binder, ParamId, ParamStore};
pub use rng::RngStream;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Scalar element type for tensors: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` for constants and RNG output.
    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant not representable")
    }
    /// Conversion to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Concrete aliases used throughout the workspace (the training stack is
/// double precision so gradient checks stay meaningful).
pub type Tensor64 = Tensor<f64>;
pub type Tape64 = Tape<f64>;
pub type ParamStore64 = ParamStore<f64>;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid axis {axis} for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("{op}: index {index} out of bounds for dimension of extent {extent}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("backward: loss must be a scalar, got shape {got:?}")]
    LossNotScalar { got: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, TensorError>;
