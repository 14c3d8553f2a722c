//! Volumetric MR data, patient cases and slice stacks.
//!
//! Voxel data is stored with `x` varying fastest, then `y`, then `z`, which
//! is the on-disk order of NIfTI-1. Orientation metadata is ignored: axes are
//! taken in header order.

mod case;
mod clinical;
mod nifti;
mod raw;
mod slices;

pub use case::{load_cases, load_patient_case, write_patient_case, Modality, PatientCase};
pub use clinical::{read_clinical_csv, write_clinical_csv, ClinicalRecord};
pub use nifti::{read_nifti, write_nifti, NIFTI_HEADER_SIZE};
pub use raw::{read_raw, write_raw, RawDtype};
pub use slices::{
    assemble_volume, copy_slice, extract_slice_range, extract_slices, extract_volume_slices, Axis, Slice, SliceStack,
};

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VolumeKind {
    Intensity,
    Label,
}

/// A 3-D scalar grid with voxel spacing in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<f32>,
    kind: VolumeKind,
}

pub(crate) fn is_label_value(v: f32) -> bool {
    matches!(v, 0.0 | 1.0 | 2.0 | 3.0 | 4.0)
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], data: Vec<f32>, kind: VolumeKind) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidHeader(format!("dimensions must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidHeader(format!("spacing must be positive, got {spacing:?}")));
        }
        let n = dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::GeometryMismatch(format!(
                "dims {dims:?} need {n} voxels, got {}",
                data.len()
            )));
        }
        let v = Volume { dims, spacing, data, kind };
        v.validate()?;
        Ok(v)
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f32; 3],
        kind: VolumeKind,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data, kind)
    }

    /// Checks the kind invariant: finite intensities, labels in `{0..4}`.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            VolumeKind::Intensity => match self.data.iter().position(|v| !v.is_finite()) {
                Some(i) => Err(Error::NonFinite(i)),
                None => Ok(()),
            },
            VolumeKind::Label => match self.data.iter().find(|&&v| !is_label_value(v)) {
                Some(&v) => Err(Error::InvalidLabel(v)),
                None => Ok(()),
            },
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable voxel access. Invariants are re-checked on write.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Voxel coordinates of a flat index.
    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn same_geometry(&self, other: &Volume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub(crate) fn require_same_geometry(&self, other: &Volume, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: {:?}@{:?} vs {:?}@{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }

    /// A volume with the same geometry and new voxel values.
    pub fn with_data(&self, data: Vec<f32>, kind: VolumeKind) -> Result<Volume> {
        Volume::new(self.dims, self.spacing, data, kind)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Reads a NIfTI-1 (`.nii`) or raw (`RAWVOL` header) volume.
///
/// The file type is detected from its content. `kind` tells whether voxel
/// values are labels; label volumes are validated against `{0..4}`.
pub fn read_volume(path: impl AsRef<Path>, kind: VolumeKind) -> Result<Volume> {
    let bytes = std::fs::read(path.as_ref())?;
    if bytes.starts_with(raw::RAW_MAGIC) {
        raw::parse_raw(&bytes, kind)
    } else {
        nifti::parse_nifti(&bytes, kind)
    }
}

/// Writes a volume as uncompressed NIfTI-1.
///
/// Intensity volumes are stored as float32, label volumes as uint8.
pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    v.validate()?;
    std::fs::write(path, nifti::encode_nifti(v))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_are_enforced() {
        assert!(Volume::new([2, 1, 1], [1.0; 3], vec![0.0], VolumeKind::Intensity).is_err());
        assert!(matches!(
            Volume::new([1, 1, 1], [1.0; 3], vec![f32::NAN], VolumeKind::Intensity),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(
            Volume::new([1, 1, 1], [1.0; 3], vec![5.0], VolumeKind::Label),
            Err(Error::InvalidLabel(_))
        ));
        assert!(Volume::new([1, 1, 1], [0.0, 1.0, 1.0], vec![1.0], VolumeKind::Intensity).is_err());
    }

    #[test]
    fn indexing_is_x_fastest() {
        let v = Volume::from_fn([3, 4, 5], [1.0; 3], VolumeKind::Intensity, |x, y, z| (x + 10 * y + 100 * z) as f32)
            .unwrap();
        assert_eq!(v.data()[1], 1.0);
        assert_eq!(v.data()[3], 10.0);
        assert_eq!(v.get(2, 3, 4), 432.0);
        assert_eq!(v.coords(v.index(2, 3, 4)), [2, 3, 4]);
    }
}
