//! Differentiable operations on [`Var`](crate::Var).

mod conv;
mod elementwise;
mod loss;
mod norm;
mod shape;

pub use norm::{ChannelStats, CoupledMode};

use crate::error::{shape_err, Result};

/// `(N, C, H, W)` of a rank-4 shape.
pub(crate) fn nchw(shape: &[usize], what: &str) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => shape_err(format!("{what}: expected [N,C,H,W], got {shape:?}")),
    }
}
