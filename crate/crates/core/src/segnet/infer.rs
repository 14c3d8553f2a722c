//! Slice-wise inference along all three axes with score averaging.

use std::path::Path;

use tumorseg_tensor::{Checkpoint, ParamSet, Tape, Tensor};

use super::data::{round_up, stack_slices, BACKGROUND};
use super::train::{generator_stats, Trainer};
use super::GeneratorConfig;
use crate::error::{Error, Result};
use crate::metrics::{Mask, RegionMaskSet};
use crate::nn::{NormPass, RefStats};
use crate::volume::{Axis, PatientCase, Volume, VolumeKind};

/// Three binary masks from region scores: `score > 0` is inside.
pub fn binarize(scores: &[f32]) -> Vec<bool> {
    scores.iter().map(|&s| s > 0.0).collect()
}

/// `CT ← CT ∧ WT`, `ET ← ET ∧ CT ∧ WT`.
pub fn enforce_nesting(wt: Mask, mut ct: Mask, mut et: Mask) -> Result<RegionMaskSet> {
    wt.require_same_geometry(&ct)?;
    wt.require_same_geometry(&et)?;
    for ((c, e), &w) in ct.data_mut().iter_mut().zip(et.data_mut().iter_mut()).zip(wt.data()) {
        *c &= w;
        *e &= *c;
    }
    RegionMaskSet::new(wt, ct, et)
}

/// ET → 4, CT∖ET → 1, WT∖CT → 2, else 0. Label 3 is never produced.
pub fn regions_to_labels(r: &RegionMaskSet) -> Result<Volume> {
    if !r.is_nested() {
        return Err(Error::InvariantViolation("regions are not nested; call enforce_nesting first".into()));
    }
    let data = r
        .wt
        .data()
        .iter()
        .zip(r.ct.data())
        .zip(r.et.data())
        .map(|((&w, &c), &e)| if e { 4.0 } else if c { 1.0 } else if w { 2.0 } else { 0.0 })
        .collect();
    Volume::new(r.wt.dims(), r.wt.spacing(), data, VolumeKind::Label)
}

/// A trained generator ready for inference.
#[derive(Clone, Debug)]
pub struct SegModel {
    pub config: GeneratorConfig,
    params: ParamSet<f32>,
    ref_image: Tensor<f32>,
    steps_trained: u64,
    stats: Option<RefStats<f32>>,
    /// Slices per forward pass.
    pub batch_size: usize,
}

impl SegModel {
    pub fn new(config: GeneratorConfig, params: ParamSet<f32>, ref_image: Tensor<f32>, steps_trained: u64) -> Self {
        SegModel { config, params, ref_image, steps_trained, stats: None, batch_size: 16 }
    }

    pub fn steps_trained(&self) -> u64 {
        self.steps_trained
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Trainer::from_checkpoint(ck)?.model())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn reference_stats(&mut self) -> Result<&RefStats<f32>> {
        if self.stats.is_none() {
            self.stats = Some(generator_stats(&self.config, &self.params, &self.ref_image)?);
        }
        Ok(self.stats.as_ref().unwrap())
    }

    /// Generator scores `[n, 3, H, W]` for an image batch `[n, 4, H, W]`.
    pub fn predict(&mut self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        if self.steps_trained == 0 {
            return Err(Error::ModelNotReady);
        }
        let cfg = self.config;
        let stats = self.reference_stats()?.clone();
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        Ok(cfg.forward(&p, tape.constant(image), &mut NormPass::apply(&stats))?.to_tensor())
    }

    /// Region scores of every voxel along one axis, `[3][voxel]`.
    pub fn axis_scores(&mut self, case: &PatientCase, axis: Axis) -> Result<[Vec<f32>; 3]> {
        let dims = case.dims();
        let (h, w) = axis.plane(dims);
        let m = self.config.multiple();
        let (hp, wp) = (round_up(h, m), round_up(w, m));
        let mods: Vec<&Volume> = case.modalities().iter().collect();
        let n = axis.len(dims);
        let total: usize = dims.iter().product();
        let mut out = [vec![0f32; total], vec![0f32; total], vec![0f32; total]];
        let mut s = 0;
        while s < n {
            let e = (s + self.batch_size.max(1)).min(n);
            let image = stack_slices(&mods, axis, s..e, m, BACKGROUND, |x| x);
            let scores = self.predict(&image)?;
            let sd = scores.data();
            for (k, i) in (s..e).enumerate() {
                for (c, o) in out.iter_mut().enumerate() {
                    let base = (k * 3 + c) * hp * wp;
                    for r in 0..h {
                        for col in 0..w {
                            o[axis.voxel(dims, i, r, col)] = sd[base + r * wp + col];
                        }
                    }
                }
            }
            s = e;
        }
        Ok(out)
    }
}

/// Segments a case: generator scores along X, Y and Z are averaged, then
/// binarized, nested and converted to labels.
pub fn segment_case(model: &mut SegModel, case: &PatientCase) -> Result<(RegionMaskSet, Volume)> {
    if model.steps_trained == 0 {
        return Err(Error::ModelNotReady);
    }
    let total: usize = case.dims().iter().product();
    let mut acc = [vec![0f32; total], vec![0f32; total], vec![0f32; total]];
    for axis in Axis::ALL {
        let s = model.axis_scores(case, axis)?;
        for c in 0..3 {
            for (a, v) in acc[c].iter_mut().zip(&s[c]) {
                *a += v;
            }
        }
    }
    let masks: Vec<Mask> = acc
        .iter()
        .map(|a| {
            let avg: Vec<f32> = a.iter().map(|v| v / 3.0).collect();
            Mask::new(case.dims(), case.spacing(), binarize(&avg))
        })
        .collect::<Result<_>>()?;
    let [wt, ct, et]: [Mask; 3] = masks.try_into().expect("three regions");
    let regions = enforce_nesting(wt, ct, et)?;
    let labels = regions_to_labels(&regions)?;
    Ok((regions, labels))
}
