//! Reverse-mode automatic differentiation over dense rank ≤ 2 tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Parameters enter the tape as
//! a whole [`ParamVector`]; [`Tape::backward`] returns a [`GradVector`] with
//! the same layout. [`fd_gradient`] is the central-difference oracle used to
//! check the analytic gradients.

mod fd;
mod params;
mod tape;
mod tensor;

use alloc::string::String;
use alloc::vec::Vec;

pub use fd::fd_gradient;
pub use params::{axpy, cosine, dot, norm, FlatVector, GradVector, Layout, ParamVector, SegmentSpec};
pub use tape::{sigmoid, Adjoints, OpKind, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdError {
    #[error("{op}: shapes {left:?} and {right:?} are not conformable")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor rank {0} exceeds 2")]
    Rank(usize),
    #[error("shape {shape:?} needs {expected} values, got {got}")]
    Length {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value produced or supplied at {0}")]
    NonFinite(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss target {0} is not 0 or 1")]
    Target(f64),
    #[error("{0} over an empty tensor")]
    Empty(&'static str),
    #[error("parameter layouts differ")]
    Layout,
    #[error("parameters are already bound to this tape")]
    ParamsBound,
    #[error("unknown parameter segment `{0}`")]
    UnknownSegment(String),
    #[error("cosine is undefined for a zero-norm vector")]
    DegenerateGradient,
}

pub type Result<T> = core::result::Result<T, AdError>;
