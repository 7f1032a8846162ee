//! Minimal dense-tensor engine with reverse-mode gradient computation.
//!
//! A [`Graph`] records forward operations on a tape; [`Graph::backward`]
//! replays it in reverse, accumulating exact gradients of the recorded
//! forward (surrogate ops accumulate gradients of their declared
//! surrogate). Values are generic over [`Scalar`]: `f32` for training,
//! `f64` for finite-difference verification.

use std::fmt::Debug;

use num_traits::Float;

mod array;
mod check;
mod checkpoint;
mod graph;
mod ops;
mod param;

pub use array::Array;
pub use check::{finite_diff_check, FiniteDiffReport};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointEntry,
};
pub use graph::{GradStore, Graph, Var};
pub use ops::ScanMode;
pub use param::{check_unique_names, Parameter};

/// Element type of tensors: `f32` or `f64`.
pub trait Scalar: Float + num_traits::NumAssign + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AutogradError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("non-finite value in {context} at flat index {index}")]
    NonFinite { context: String, index: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutogradError>;
