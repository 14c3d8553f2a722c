//! Building blocks shared by the segmentation and survival networks.

use rand::Rng;
use tumorseg_tensor::{BoundParams, ChannelStats, CoupledMode, ParamSet, Result, Scalar, Tensor, Var};

pub const NORM_EPS: f64 = 1e-5;

/// Which fixed-reference normalization a layer uses outside of recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Virtual,
    Reference,
}

/// Per-layer statistics of a reference batch, in forward order.
pub type RefStats<T> = Vec<ChannelStats<T>>;

/// Normalization state threaded through one forward pass.
///
/// `Record` normalizes every layer with the batch's own statistics and
/// collects them; `Apply` normalizes with previously recorded statistics.
/// `Coupled` expects the reference batch stacked in front of the input and
/// lets gradients flow through the reference statistics; training uses it.
pub enum NormPass<'a, T> {
    Record(RefStats<T>),
    Apply { stats: &'a [ChannelStats<T>], next: usize },
    Coupled { n_ref: usize },
}

impl<'a, T: Scalar> NormPass<'a, T> {
    pub fn record() -> Self {
        NormPass::Record(Vec::new())
    }

    pub fn apply(stats: &'a [ChannelStats<T>]) -> Self {
        NormPass::Apply { stats, next: 0 }
    }

    pub fn coupled(n_ref: usize) -> Self {
        NormPass::Coupled { n_ref }
    }

    /// Leading reference rows the input carries.
    pub fn reference_rows(&self) -> usize {
        match self {
            NormPass::Coupled { n_ref } => *n_ref,
            _ => 0,
        }
    }

    /// Drops the reference rows of a network output.
    pub fn strip<'t>(&self, y: Var<'t, T>) -> Result<Var<'t, T>> {
        match self.reference_rows() {
            0 => Ok(y),
            r => {
                let n = y.shape()[0];
                rows(y, r, n - r)
            }
        }
    }

    /// Recorded statistics; empty for a coupled pass.
    pub fn into_stats(self) -> RefStats<T> {
        match self {
            NormPass::Record(s) => s,
            NormPass::Apply { stats, .. } => stats.to_vec(),
            NormPass::Coupled { .. } => Vec::new(),
        }
    }

    pub fn norm<'t>(&mut self, x: Var<'t, T>, gamma: Var<'t, T>, beta: Var<'t, T>, kind: NormKind) -> Result<Var<'t, T>> {
        match self {
            NormPass::Record(list) => {
                let stats = x.with_value(|v| ChannelStats::from_slice(v, &x.shape()))?;
                let y = x.batch_norm(gamma, beta, NORM_EPS)?;
                list.push(stats);
                Ok(y)
            }
            NormPass::Apply { stats, next } => {
                let Some(s) = stats.get(*next) else {
                    return Err(tumorseg_tensor::TensorError::Shape(format!(
                        "reference statistics cover {} layers, network has more",
                        stats.len()
                    )));
                };
                *next += 1;
                match kind {
                    NormKind::Virtual => x.virtual_batch_norm(s, gamma, beta, NORM_EPS),
                    NormKind::Reference => x.reference_batch_norm(s, gamma, beta, NORM_EPS),
                }
            }
            NormPass::Coupled { n_ref } => {
                let mode = match kind {
                    NormKind::Virtual => CoupledMode::Virtual,
                    NormKind::Reference => CoupledMode::Reference,
                };
                x.reference_coupled_norm(*n_ref, mode, gamma, beta, NORM_EPS)
            }
        }
    }
}

/// He-normal convolution kernel `[out, in, k, k]`.
pub fn conv_weight<T: Scalar>(out: usize, inp: usize, k: usize, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::randn(&[out, inp, k, k], (2.0 / (inp * k * k) as f64).sqrt(), rng)
}

pub fn add_norm<T: Scalar>(p: &mut ParamSet<T>, name: &str, channels: usize) {
    p.insert(format!("{name}.gamma"), Tensor::full(&[channels], T::one()));
    p.insert(format!("{name}.beta"), Tensor::zeros(&[channels]));
}

/// Registers a 3×3 convolution followed by normalization.
pub fn add_conv_norm<T: Scalar>(p: &mut ParamSet<T>, name: &str, out: usize, inp: usize, rng: &mut impl Rng) {
    p.insert(format!("{name}.w"), conv_weight(out, inp, 3, rng));
    add_norm(p, name, out);
}

/// 3×3 same-padding convolution, normalization, ReLU.
pub fn conv_norm_relu<'t, T: Scalar>(
    x: Var<'t, T>,
    p: &BoundParams<'t, T>,
    name: &str,
    norm: &mut NormPass<'_, T>,
    kind: NormKind,
) -> Result<Var<'t, T>> {
    let y = x.conv2d(p.get(&format!("{name}.w")), 1, 1)?;
    Ok(norm.norm(y, p.get(&format!("{name}.gamma")), p.get(&format!("{name}.beta")), kind)?.relu())
}

/// Stacks tensors with equal trailing shape along axis 0.
pub fn stack_rows<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let tail = parts[0].shape()[1..].to_vec();
    let mut n = 0;
    let mut data = Vec::with_capacity(parts.iter().map(|t| t.len()).sum());
    for t in parts {
        if t.shape()[1..] != tail[..] {
            return Err(tumorseg_tensor::TensorError::Shape(format!("cannot stack {:?} under {tail:?}", t.shape())));
        }
        n += t.shape()[0];
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![n];
    shape.extend(tail);
    Tensor::new(&shape, data)
}

/// Rows `start..start + len` along axis 0.
pub fn rows<'t, T: Scalar>(x: Var<'t, T>, start: usize, len: usize) -> Result<Var<'t, T>> {
    let mut shape = x.shape();
    let row: usize = shape[1..].iter().product();
    shape[0] = len;
    x.narrow_flat(start * row, &shape)
}
