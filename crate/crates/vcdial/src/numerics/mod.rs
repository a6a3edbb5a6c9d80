//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a dynamic tape: forward ops record themselves as they
//! run, `backward` replays the tape in reverse, and gradients land on the
//! recording nodes. [`ParameterStore`] holds the named trainable tensors
//! that get injected into each per-example graph, and [`check::grad_check`]
//! is the central-difference oracle used throughout the test suite.

mod check;
mod graph;
mod optim;
pub mod rng;
mod store;
mod tensor;

pub use check::{grad_check, grad_check_store, DEFAULT_EPS};
pub use graph::{Graph, NormAxis, Var};
pub use optim::{clip_global_norm, Adam};
pub use store::{Parameter, ParameterStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape {shape:?} does not fit {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("backward expects a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}
