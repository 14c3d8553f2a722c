//! Patch discriminator over (image, region map) pairs.

use rand::Rng;
use tumorseg_tensor::{BoundParams, ParamSet, Result, Scalar, Tensor, TensorError, Var};

use super::generator::{IMAGE_CHANNELS, REGION_CHANNELS};
use crate::nn::{add_norm, conv_weight, NormKind, NormPass};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    /// Strided 4×4 convolutions, each halving the resolution.
    pub layers: usize,
    pub base_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { layers: 3, base_channels: 64 }
    }
}

impl DiscriminatorConfig {
    pub fn in_channels(&self) -> usize {
        IMAGE_CHANNELS + REGION_CHANNELS
    }

    fn channels(&self, l: usize) -> usize {
        self.base_channels << l
    }

    /// Receptive field of one output score, in input pixels.
    pub fn receptive_field(&self) -> usize {
        // head: k3 s1; each strided layer: k4 s2
        let mut rf = 3;
        for _ in 0..self.layers {
            rf = 2 * (rf - 1) + 4;
        }
        rf
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let mut s = (h, w);
        for _ in 0..self.layers {
            s = (s.0 / 2, s.1 / 2);
        }
        s
    }

    pub fn init_params<T: Scalar>(&self, rng: &mut impl Rng) -> ParamSet<T> {
        let mut p = ParamSet::new();
        let mut inp = self.in_channels();
        for l in 0..self.layers {
            let c = self.channels(l);
            p.insert(format!("conv{l}.w"), conv_weight(c, inp, 4, rng));
            if l == 0 {
                p.insert(format!("conv{l}.b"), Tensor::zeros(&[c]));
            } else {
                add_norm(&mut p, &format!("conv{l}"), c);
            }
            inp = c;
        }
        p.insert("head.w", Tensor::randn(&[1, inp, 3, 3], (1.0 / (9 * inp) as f64).sqrt(), rng));
        p.insert("head.b", Tensor::zeros(&[1]));
        p
    }

    /// Patch probabilities `[N, 1, h, w]` for images `[N,4,H,W]` and region
    /// maps `[N,3,H,W]` in (−1, 1) encoding. A coupled pass drops the
    /// reference rows from the output.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &BoundParams<'t, T>,
        image: Var<'t, T>,
        seg: Var<'t, T>,
        norm: &mut NormPass<'_, T>,
    ) -> Result<Var<'t, T>> {
        let (si, ss) = (image.shape(), seg.shape());
        let m = 1 << self.layers;
        if si.len() != 4
            || ss.len() != 4
            || si[1] != IMAGE_CHANNELS
            || ss[1] != REGION_CHANNELS
            || si[0] != ss[0]
            || si[2..] != ss[2..]
            || si[2] % m != 0
            || si[3] % m != 0
        {
            return Err(TensorError::Shape(format!(
                "discriminator inputs {si:?} and {ss:?} (spatial sizes must be multiples of {m})"
            )));
        }
        let mut h = image.concat(seg)?;
        for l in 0..self.layers {
            h = h.conv2d(p.get(&format!("conv{l}.w")), 2, 1)?;
            h = if l == 0 {
                h.add_channel_bias(p.get(&format!("conv{l}.b")))?
            } else {
                norm.norm(h, p.get(&format!("conv{l}.gamma")), p.get(&format!("conv{l}.beta")), NormKind::Reference)?
            };
            h = h.leaky_relu(LEAKY_SLOPE);
        }
        norm.strip(h.conv2d(p.get("head.w"), 1, 1)?.add_channel_bias(p.get("head.b"))?.sigmoid())
    }
}
