//! Patient-wise slice batches and the deterministic training schedule.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tumorseg_tensor::Tensor;

use super::generator::{IMAGE_CHANNELS, REGION_CHANNELS};
use crate::error::{Error, Result};
use crate::metrics::RegionMaskSet;
use crate::volume::{copy_slice, Axis, PatientCase, Volume};

/// Background level of normalized inputs.
pub const BACKGROUND: f32 = -1.0;

/// Pads a `[c, h, w]` block to `[c, hp, wp]`, filling with `fill`.
pub(crate) fn pad_plane(src: &[f32], c: usize, (h, w): (usize, usize), (hp, wp): (usize, usize), fill: f32, out: &mut [f32]) {
    out.fill(fill);
    for ch in 0..c {
        for r in 0..h {
            let s = &src[(ch * h + r) * w..(ch * h + r + 1) * w];
            out[(ch * hp + r) * wp..(ch * hp + r) * wp + w].copy_from_slice(s);
        }
    }
}

pub(crate) fn round_up(x: usize, m: usize) -> usize {
    x.div_ceil(m) * m
}

/// Stacks slices `range` along `axis` of several volumes into `[n, vols, hp, wp]`.
pub(crate) fn stack_slices(vols: &[&Volume], axis: Axis, range: Range<usize>, multiple: usize, fill: f32, map: impl Fn(f32) -> f32) -> Tensor<f32> {
    let dims = vols[0].dims();
    let (h, w) = axis.plane(dims);
    let (hp, wp) = (round_up(h, multiple), round_up(w, multiple));
    let c = vols.len();
    let n = range.len();
    let mut data = vec![0.0; n * c * hp * wp];
    let mut plane = vec![0.0; c * h * w];
    for (k, i) in range.enumerate() {
        for (ch, v) in vols.iter().enumerate() {
            copy_slice(v, axis, i, &mut plane[ch * h * w..(ch + 1) * h * w]);
        }
        plane.iter_mut().for_each(|x| *x = map(*x));
        pad_plane(&plane, c, (h, w), (hp, wp), fill, &mut data[k * c * hp * wp..(k + 1) * c * hp * wp]);
    }
    Tensor::new(&[n, c, hp, wp], data).expect("consistent batch shape")
}

/// Cases with ground truth and their region targets.
#[derive(Clone, Debug)]
pub struct SegDataset {
    cases: Vec<PatientCase>,
    targets: Vec<[Volume; 3]>,
}

impl SegDataset {
    pub fn new(cases: Vec<PatientCase>) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::EmptyInput("no training cases".into()));
        }
        let mut targets = Vec::with_capacity(cases.len());
        for c in &cases {
            let t = c.truth().ok_or_else(|| Error::InvalidParameter(format!("case {} has no ground truth", c.id())))?;
            targets.push(RegionMaskSet::from_labels(t).as_volumes());
        }
        Ok(SegDataset { cases, targets })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[PatientCase] {
        &self.cases
    }

    /// Image `[n, 4, H, W]` and target `[n, 3, H, W]` in ±1 encoding.
    pub fn batch(&self, case: usize, axis: Axis, range: Range<usize>, multiple: usize) -> (Tensor<f32>, Tensor<f32>) {
        let c = &self.cases[case];
        let mods: Vec<&Volume> = c.modalities().iter().collect();
        let image = stack_slices(&mods, axis, range.clone(), multiple, BACKGROUND, |x| x);
        let t: Vec<&Volume> = self.targets[case].iter().collect();
        let target = stack_slices(&t, axis, range, multiple, -1.0, |m| if m > 0.5 { 1.0 } else { -1.0 });
        debug_assert_eq!(image.shape()[1], IMAGE_CHANNELS);
        debug_assert_eq!(target.shape()[1], REGION_CHANNELS);
        (image, target)
    }

    /// Slices along `axis` that contain any non-background input.
    fn content_range(&self, case: usize, axis: Axis) -> Range<usize> {
        let c = &self.cases[case];
        let dims = c.dims();
        let n = axis.len(dims);
        let (h, w) = axis.plane(dims);
        let mut plane = vec![0.0; h * w];
        let has = |i: usize, plane: &mut [f32]| {
            c.modalities().iter().any(|v| {
                copy_slice(v, axis, i, plane);
                plane.iter().any(|&x| x > BACKGROUND)
            })
        };
        let first = (0..n).find(|&i| has(i, &mut plane));
        match first {
            None => 0..0,
            Some(f) => {
                let last = (f..n).rev().find(|&i| has(i, &mut plane)).unwrap();
                f..last + 1
            }
        }
    }
}

/// One training batch: contiguous slices of one case along one axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchRef {
    pub case: usize,
    pub axis: Axis,
    pub range: Range<usize>,
}

/// Epoch layout: patients in a seeded order per epoch; within a patient,
/// axes X, Y, Z and consecutive slice chunks in on-disk order.
#[derive(Clone, Debug)]
pub struct Schedule {
    seed: u64,
    /// Batches of each case, in order.
    per_case: Vec<Vec<BatchRef>>,
    steps_per_epoch: usize,
}

impl Schedule {
    pub fn new(data: &SegDataset, batch_size: usize, crop_background: bool, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        let mut per_case = Vec::with_capacity(data.len());
        for case in 0..data.len() {
            let dims = data.cases[case].dims();
            let mut list = Vec::new();
            for axis in Axis::ALL {
                let r = if crop_background { data.content_range(case, axis) } else { 0..axis.len(dims) };
                let mut s = r.start;
                while s < r.end {
                    let e = (s + batch_size).min(r.end);
                    list.push(BatchRef { case, axis, range: s..e });
                    s = e;
                }
            }
            per_case.push(list);
        }
        let steps_per_epoch = per_case.iter().map(Vec::len).sum();
        if steps_per_epoch == 0 {
            return Err(Error::EmptyInput("no non-background slices to train on".into()));
        }
        Ok(Schedule { seed, per_case, steps_per_epoch })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    pub fn patient_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.per_case.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        order
    }

    /// Batch for global step `step`, and its epoch.
    pub fn at(&self, step: u64) -> (u64, BatchRef) {
        let epoch = step / self.steps_per_epoch as u64;
        let mut pos = (step % self.steps_per_epoch as u64) as usize;
        for case in self.patient_order(epoch) {
            let list = &self.per_case[case];
            if pos < list.len() {
                return (epoch, list[pos].clone());
            }
            pos -= list.len();
        }
        unreachable!("position within epoch")
    }
}
