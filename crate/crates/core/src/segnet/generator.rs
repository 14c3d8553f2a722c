//! U-Net generator: 4 image channels in, 3 region score maps in (−1, 1) out.

use rand::Rng;
use tumorseg_tensor::{BoundParams, ParamSet, Result, Scalar, Tensor, TensorError, Var};

use crate::nn::{add_conv_norm, conv_norm_relu, NormKind, NormPass};

pub const IMAGE_CHANNELS: usize = 4;
pub const REGION_CHANNELS: usize = 3;
/// atanh(-0.9): initial output of about -0.9 on every region channel.
pub const HEAD_BIAS_INIT: f64 = -1.472_219_489_583_220_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Number of 2× down/up-sampling levels.
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { depth: 4, base_channels: 32 }
    }
}

impl GeneratorConfig {
    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial sizes must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn init_params<T: Scalar>(&self, rng: &mut impl Rng) -> ParamSet<T> {
        let mut p = ParamSet::new();
        let mut inp = IMAGE_CHANNELS;
        for l in 0..=self.depth {
            let c = self.channels(l);
            add_conv_norm(&mut p, &format!("enc{l}.a"), c, inp, rng);
            add_conv_norm(&mut p, &format!("enc{l}.b"), c, c, rng);
            inp = c;
        }
        for l in (0..self.depth).rev() {
            let (c, up) = (self.channels(l), self.channels(l + 1));
            p.insert(format!("up{l}.w"), Tensor::randn(&[up, c, 2, 2], (1.0 / up as f64).sqrt(), rng));
            p.insert(format!("up{l}.b"), Tensor::zeros(&[c]));
            add_conv_norm(&mut p, &format!("dec{l}.a"), c, 2 * c, rng);
            add_conv_norm(&mut p, &format!("dec{l}.b"), c, c, rng);
        }
        let c0 = self.channels(0);
        p.insert("head.w", Tensor::randn(&[REGION_CHANNELS, c0, 1, 1], (1.0 / c0 as f64).sqrt(), rng));
        // start every region map near the background value
        p.insert("head.b", Tensor::full(&[REGION_CHANNELS], T::c(HEAD_BIAS_INIT)));
        p
    }

    /// `[N, 4, H, W]` → `[N, 3, H, W]`, tanh output. A coupled pass drops the
    /// reference rows from the output.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &BoundParams<'t, T>,
        x: Var<'t, T>,
        norm: &mut NormPass<'_, T>,
    ) -> Result<Var<'t, T>> {
        let s = x.shape();
        let m = self.multiple();
        if s.len() != 4 || s[1] != IMAGE_CHANNELS || s[2] % m != 0 || s[3] % m != 0 {
            return Err(TensorError::Shape(format!(
                "generator expects [N, {IMAGE_CHANNELS}, H, W] with H, W multiples of {m}, got {s:?}"
            )));
        }
        let kind = NormKind::Virtual;
        let mut skips = Vec::with_capacity(self.depth);
        let mut h = x;
        for l in 0..=self.depth {
            h = conv_norm_relu(h, p, &format!("enc{l}.a"), norm, kind)?;
            h = conv_norm_relu(h, p, &format!("enc{l}.b"), norm, kind)?;
            if l < self.depth {
                skips.push(h);
                h = h.max_pool2d()?;
            }
        }
        for l in (0..self.depth).rev() {
            let up = h.conv_transpose2d(p.get(&format!("up{l}.w")), 2, 0)?.add_channel_bias(p.get(&format!("up{l}.b")))?;
            h = skips[l].concat(up)?;
            h = conv_norm_relu(h, p, &format!("dec{l}.a"), norm, kind)?;
            h = conv_norm_relu(h, p, &format!("dec{l}.b"), norm, kind)?;
        }
        norm.strip(h.conv2d(p.get("head.w"), 1, 0)?.add_channel_bias(p.get("head.b"))?.tanh())
    }
}
