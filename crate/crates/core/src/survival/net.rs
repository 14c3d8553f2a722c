//! Two-pathway survival network: a convolutional image path and a dense
//! clinical path, concatenated and passed to two dense layers.

use rand::Rng;
use tumorseg_tensor::{BoundParams, ParamSet, Result, Scalar, Tensor, TensorError, Var};

use super::input::{SurvivalInput, SURVIVAL_CHANNELS};
use crate::nn::{add_conv_norm, conv_norm_relu, NormKind, NormPass};
use crate::segnet::BACKGROUND;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SurvivalNetConfig {
    /// Conv + norm + ReLU + 2×2 max-pool blocks; channels double per block.
    pub blocks: usize,
    pub base_channels: usize,
    pub clinical_hidden: usize,
    pub fc_hidden: usize,
}

impl Default for SurvivalNetConfig {
    fn default() -> Self {
        SurvivalNetConfig { blocks: 3, base_channels: 8, clinical_hidden: 8, fc_hidden: 32 }
    }
}

fn dense<T: Scalar>(p: &mut ParamSet<T>, name: &str, out: usize, inp: usize, rng: &mut impl Rng) {
    p.insert(format!("{name}.w"), Tensor::randn(&[out, inp], (2.0 / inp as f64).sqrt(), rng));
    p.insert(format!("{name}.b"), Tensor::zeros(&[out]));
}

impl SurvivalNetConfig {
    fn channels(&self, block: usize) -> usize {
        self.base_channels << block
    }

    /// Image sides must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.blocks
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.blocks == 0 || self.base_channels == 0 || self.clinical_hidden == 0 || self.fc_hidden == 0 {
            return Err(format!("survival net sizes must be positive: {self:?}"));
        }
        Ok(())
    }

    pub fn init_params<T: Scalar>(&self, rng: &mut impl Rng) -> ParamSet<T> {
        let mut p = ParamSet::new();
        let mut inp = SURVIVAL_CHANNELS;
        for l in 0..self.blocks {
            add_conv_norm(&mut p, &format!("img{l}"), self.channels(l), inp, rng);
            inp = self.channels(l);
        }
        dense(&mut p, "clin", self.clinical_hidden, 1, rng);
        dense(&mut p, "fc1", self.fc_hidden, inp + self.clinical_hidden, rng);
        dense(&mut p, "fc2", 1, self.fc_hidden, rng);
        p
    }

    /// `image [N, 7, H, W]`, `age [N, 1]` → scaled survival `[N, 1]` in (0, 1).
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &BoundParams<'t, T>,
        image: Var<'t, T>,
        age: Var<'t, T>,
        norm: &mut NormPass<'_, T>,
    ) -> Result<Var<'t, T>> {
        let (si, sa) = (image.shape(), age.shape());
        let m = self.multiple();
        let r = norm.reference_rows();
        if si.len() != 4 || si[1] != SURVIVAL_CHANNELS || si[2] % m != 0 || si[3] % m != 0 || sa != [si[0].saturating_sub(r), 1] {
            return Err(TensorError::Shape(format!(
                "survival net expects [N, {SURVIVAL_CHANNELS}, H, W] (H, W multiples of {m}) and [N, 1], got {si:?} and {sa:?}"
            )));
        }
        let mut h = image;
        for l in 0..self.blocks {
            h = conv_norm_relu(h, p, &format!("img{l}"), norm, NormKind::Virtual)?.max_pool2d()?;
        }
        let img = norm.strip(h.global_avg_pool()?)?;
        let clin = age.linear(p.get("clin.w"), p.get("clin.b"))?.relu();
        let z = img.concat(clin)?.linear(p.get("fc1.w"), p.get("fc1.b"))?.relu();
        Ok(z.linear(p.get("fc2.w"), p.get("fc2.b"))?.sigmoid())
    }
}

/// Batches inputs, padding each image to a multiple of `multiple` (modality
/// channels with the background level, mask channels with 0).
pub fn stack_inputs(inputs: &[&SurvivalInput], multiple: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let Some(first) = inputs.first() else {
        return Err(TensorError::Shape("empty survival batch".into()));
    };
    let s = first.image.shape().to_vec();
    let (h, w) = (s[1], s[2]);
    let (hp, wp) = (h.div_ceil(multiple) * multiple, w.div_ceil(multiple) * multiple);
    let per = SURVIVAL_CHANNELS * hp * wp;
    let mut data = vec![0.0; inputs.len() * per];
    for (k, inp) in inputs.iter().enumerate() {
        if inp.image.shape() != s.as_slice() {
            return Err(TensorError::Shape(format!("survival images {:?} and {s:?} in one batch", inp.image.shape())));
        }
        let src = inp.image.data();
        for ch in 0..SURVIVAL_CHANNELS {
            let dst = &mut data[k * per + ch * hp * wp..k * per + (ch + 1) * hp * wp];
            dst.fill(if ch < 4 { BACKGROUND } else { 0.0 });
            for r in 0..h {
                dst[r * wp..r * wp + w].copy_from_slice(&src[(ch * h + r) * w..(ch * h + r + 1) * w]);
            }
        }
    }
    let ages = inputs.iter().map(|i| i.age).collect();
    Ok((Tensor::new(&[inputs.len(), SURVIVAL_CHANNELS, hp, wp], data)?, Tensor::new(&[inputs.len(), 1], ages)?))
}
