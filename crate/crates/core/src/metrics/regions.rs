use std::fmt;

use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// Whole tumor: labels 1, 2, 3, 4.
    Wt,
    /// Tumor core: labels 1, 3, 4.
    Ct,
    /// Enhancing tumor: label 4.
    Et,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Wt, Region::Ct, Region::Et];

    pub fn contains_label(self, label: u8) -> bool {
        match self {
            Region::Wt => matches!(label, 1..=4),
            Region::Ct => matches!(label, 1 | 3 | 4),
            Region::Et => label == 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Wt => "WT",
            Region::Ct => "CT",
            Region::Et => "ET",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A binary voxel mask with volume geometry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    spacing: [u32; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::GeometryMismatch(format!("mask dims {dims:?} vs {} values", data.len())));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("spacing {spacing:?}")));
        }
        Ok(Mask { dims, spacing: spacing.map(f32::to_bits), data })
    }

    pub fn from_fn(dims: [usize; 3], spacing: [f32; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Mask::new(dims, spacing, data).expect("valid mask geometry")
    }

    /// Voxels of `v` strictly above zero.
    pub fn from_volume(v: &Volume) -> Self {
        Mask { dims: v.dims(), spacing: v.spacing().map(f32::to_bits), data: v.data().iter().map(|&x| x > 0.0).collect() }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing.map(f32::from_bits)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    pub fn same_geometry(&self, other: &Mask) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub(crate) fn require_same_geometry(&self, other: &Mask) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "masks {:?}@{:?} vs {:?}@{:?}",
                self.dims,
                self.spacing(),
                other.dims,
                other.spacing()
            )))
        }
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn not(&self) -> Mask {
        Mask { dims: self.dims, spacing: self.spacing, data: self.data.iter().map(|b| !b).collect() }
    }

    pub fn to_volume(&self) -> Volume {
        Volume::new(
            self.dims,
            self.spacing(),
            self.data.iter().map(|&b| b as u8 as f32).collect(),
            VolumeKind::Intensity,
        )
        .expect("mask geometry is valid")
    }
}

/// The nested masks WT ⊇ CT ⊇ ET.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMaskSet {
    pub wt: Mask,
    pub ct: Mask,
    pub et: Mask,
}

impl RegionMaskSet {
    /// Region masks of a validated label volume.
    pub fn from_labels(labels: &Volume) -> Self {
        let mk = |r: Region| Mask {
            dims: labels.dims(),
            spacing: labels.spacing().map(f32::to_bits),
            data: labels.data().iter().map(|&v| r.contains_label(v as u8)).collect(),
        };
        RegionMaskSet { wt: mk(Region::Wt), ct: mk(Region::Ct), et: mk(Region::Et) }
    }

    /// Builds a set from three masks, checking geometry and nesting.
    pub fn new(wt: Mask, ct: Mask, et: Mask) -> Result<Self> {
        wt.require_same_geometry(&ct)?;
        wt.require_same_geometry(&et)?;
        if !et.is_subset_of(&ct) || !ct.is_subset_of(&wt) {
            return Err(Error::InvariantViolation("region masks are not nested (ET ⊆ CT ⊆ WT)".into()));
        }
        Ok(RegionMaskSet { wt, ct, et })
    }

    pub fn get(&self, r: Region) -> &Mask {
        match r {
            Region::Wt => &self.wt,
            Region::Ct => &self.ct,
            Region::Et => &self.et,
        }
    }

    pub fn is_nested(&self) -> bool {
        self.et.is_subset_of(&self.ct) && self.ct.is_subset_of(&self.wt)
    }

    /// The three masks as 0/1 volumes in WT, CT, ET order.
    pub fn as_volumes(&self) -> [Volume; 3] {
        [self.wt.to_volume(), self.ct.to_volume(), self.et.to_volume()]
    }
}

/// Region masks of a label volume. Rejects values outside `{0..4}`.
pub fn region_masks(labels: &Volume) -> Result<RegionMaskSet> {
    if labels.kind() != VolumeKind::Label {
        return Err(Error::InvalidParameter("region masks need a label volume".into()));
    }
    labels.validate()?;
    Ok(RegionMaskSet::from_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_voxel_of_each_label() {
        let v = Volume::new([5, 1, 1], [1.0; 3], vec![0.0, 1.0, 2.0, 3.0, 4.0], VolumeKind::Label).unwrap();
        let m = region_masks(&v).unwrap();
        assert_eq!((m.wt.count(), m.ct.count(), m.et.count()), (4, 3, 1));
        assert!(m.wt.get(2, 0, 0) && !m.ct.get(2, 0, 0));
        assert!(m.is_nested());
    }

    #[test]
    fn rejects_non_nested() {
        let a = Mask::from_fn([2, 1, 1], [1.0; 3], |x, _, _| x == 0);
        let b = Mask::from_fn([2, 1, 1], [1.0; 3], |x, _, _| x == 1);
        assert!(RegionMaskSet::new(a.clone(), b, a).is_err());
    }
}
