//! A small reverse-mode tensor engine.
//!
//! Operations are recorded on a [`Tape`] as they execute; [`Tape::backward`]
//! walks the tape in reverse and returns leaf gradients. Everything is
//! generic over [`Scalar`] so that networks train in `f32` and are verified
//! against finite differences in `f64` ([`gradcheck`]).

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod ops;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use ops::{ChannelStats, CoupledMode};
pub use optim::{Adam, AdamConfig};
pub use params::{BoundParams, ParamSet};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
