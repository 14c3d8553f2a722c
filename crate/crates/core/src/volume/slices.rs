//! 2-D slicing of volumes along one of the three axes.
//!
//! Slice orientation (rows × cols):
//! - `X`: y × z
//! - `Y`: x × z
//! - `Z`: x × y

use std::ops::Range;

use super::{PatientCase, Volume, VolumeKind};
use crate::error::{Error, Result};
use crate::metrics::RegionMaskSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of slices along this axis.
    pub fn len(self, dims: [usize; 3]) -> usize {
        dims[self.index()]
    }

    /// Slice shape `(height, width)` for a volume of `dims`.
    pub fn plane(self, dims: [usize; 3]) -> (usize, usize) {
        let [nx, ny, nz] = dims;
        match self {
            Axis::X => (ny, nz),
            Axis::Y => (nx, nz),
            Axis::Z => (nx, ny),
        }
    }

    /// Flat volume index of pixel `(r, c)` on slice `i`.
    #[inline]
    pub fn voxel(self, dims: [usize; 3], i: usize, r: usize, c: usize) -> usize {
        let [x, y, z] = match self {
            Axis::X => [i, r, c],
            Axis::Y => [r, i, c],
            Axis::Z => [r, c, i],
        };
        x + dims[0] * (y + dims[1] * z)
    }
}

/// A multi-channel 2-D image, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Slice {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::GeometryMismatch(format!(
                "slice {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Slice { channels, height, width, data })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Consecutive slices of one case along one axis.
///
/// `inputs` carry the four modalities (T1, T1ce, T2, FLAIR). `targets`, when
/// the case has ground truth, carry the WT, CT and ET masks as 0/1.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStack {
    pub axis: Axis,
    pub index_range: Range<usize>,
    pub inputs: Vec<Slice>,
    pub targets: Option<Vec<Slice>>,
}

impl SliceStack {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inputs.first().map_or((0, 0), |s| (s.height, s.width))
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.index_range.len() {
            return Err(Error::GeometryMismatch("slice count differs from index range".into()));
        }
        let shape = self.shape();
        let check = |s: &Slice, ch: usize| {
            if (s.height, s.width) != shape || s.channels != ch {
                Err(Error::GeometryMismatch(format!(
                    "slice {}x{}x{} in a stack of {}x{}x{}",
                    s.channels, s.height, s.width, ch, shape.0, shape.1
                )))
            } else {
                Ok(())
            }
        };
        for s in &self.inputs {
            check(s, 4)?;
        }
        if let Some(t) = &self.targets {
            if t.len() != self.inputs.len() {
                return Err(Error::GeometryMismatch("target count differs from input count".into()));
            }
            for s in t {
                check(s, 3)?;
            }
        }
        Ok(())
    }
}

/// Copies slice `i` of `v` along `axis` into `out` (row-major, `axis.plane` shape).
pub fn copy_slice(v: &Volume, axis: Axis, i: usize, out: &mut [f32]) {
    let dims = v.dims();
    let (h, w) = axis.plane(dims);
    let data = v.data();
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = data[axis.voxel(dims, i, r, c)];
        }
    }
}

/// Single-channel slices of one volume, one per index along `axis`.
pub fn extract_volume_slices(v: &Volume, axis: Axis) -> Vec<Slice> {
    let (h, w) = axis.plane(v.dims());
    (0..axis.len(v.dims()))
        .map(|i| {
            let mut data = vec![0.0; h * w];
            copy_slice(v, axis, i, &mut data);
            Slice { channels: 1, height: h, width: w, data }
        })
        .collect()
}

fn stack_channels(volumes: &[&Volume], axis: Axis, i: usize) -> Slice {
    let dims = volumes[0].dims();
    let (h, w) = axis.plane(dims);
    let n = h * w;
    let mut data = vec![0.0; volumes.len() * n];
    for (c, v) in volumes.iter().enumerate() {
        copy_slice(v, axis, i, &mut data[c * n..(c + 1) * n]);
    }
    Slice { channels: volumes.len(), height: h, width: w, data }
}

/// Every slice of `case` along `axis`.
pub fn extract_slices(case: &PatientCase, axis: Axis) -> SliceStack {
    let n = axis.len(case.dims());
    extract_slice_range(case, axis, 0..n).expect("full range is in bounds")
}

/// Slices `range` of `case` along `axis`.
pub fn extract_slice_range(case: &PatientCase, axis: Axis, range: Range<usize>) -> Result<SliceStack> {
    let n = axis.len(case.dims());
    if range.start > range.end || range.end > n {
        return Err(Error::InvalidParameter(format!("slice range {range:?} outside 0..{n}")));
    }
    let mods: Vec<&Volume> = case.modalities().iter().collect();
    let inputs = range.clone().map(|i| stack_channels(&mods, axis, i)).collect();
    let targets = case.truth().map(|t| {
        let masks = RegionMaskSet::from_labels(t);
        let vols = masks.as_volumes();
        let refs: Vec<&Volume> = vols.iter().collect();
        range.clone().map(|i| stack_channels(&refs, axis, i)).collect()
    });
    Ok(SliceStack { axis, index_range: range, inputs, targets })
}

/// Inverse of [`extract_volume_slices`]: rebuilds a volume from per-index
/// single-channel maps of shape `axis.plane(dims)`.
pub fn assemble_volume(
    slices: &[Vec<f32>],
    axis: Axis,
    dims: [usize; 3],
    spacing: [f32; 3],
    kind: VolumeKind,
) -> Result<Volume> {
    let n = axis.len(dims);
    if slices.len() != n {
        return Err(Error::GeometryMismatch(format!("{} slices for an axis of length {n}", slices.len())));
    }
    let (h, w) = axis.plane(dims);
    let mut data = vec![0.0; dims.iter().product()];
    for (i, s) in slices.iter().enumerate() {
        if s.len() != h * w {
            return Err(Error::GeometryMismatch(format!("slice {i} has {} pixels, expected {h}x{w}", s.len())));
        }
        for r in 0..h {
            for c in 0..w {
                data[axis.voxel(dims, i, r, c)] = s[r * w + c];
            }
        }
    }
    Volume::new(dims, spacing, data, kind)
}
