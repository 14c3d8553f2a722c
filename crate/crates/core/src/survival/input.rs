use tumorseg_tensor::Tensor;

use super::scale::scale_age;
use crate::error::{Error, Result};
use crate::metrics::{Mask, Region, RegionMaskSet};
use crate::preprocess::{normalize_intensity, NormTarget};
use crate::volume::{copy_slice, Axis, PatientCase};

/// Image channels: four modalities, then WT, CT and ET masks.
pub const SURVIVAL_CHANNELS: usize = 7;

/// Which axial slice represents a case.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SlicePolicy {
    /// The axial slice with the largest whole-tumor area (lowest index on ties).
    #[default]
    MaxWtArea,
    Central,
}

impl std::str::FromStr for SlicePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_wt_area" => Ok(SlicePolicy::MaxWtArea),
            "central" => Ok(SlicePolicy::Central),
            _ => Err(Error::Config(format!("unknown slice policy {s:?} (expected max_wt_area or central)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalInput {
    /// `[7, H, W]`, modalities in [-1, 1] and binary region channels.
    pub image: Tensor<f32>,
    /// Scaled age in [0, 1].
    pub age: f32,
    /// Axial index the image was taken from.
    pub slice: usize,
    /// The policy found no tumor and fell back to the central slice.
    pub fallback: bool,
}

/// Whole-tumor voxel count of every axial slice.
pub fn axial_areas(wt: &Mask) -> Vec<usize> {
    let dims = wt.dims();
    let (h, w) = Axis::Z.plane(dims);
    (0..dims[2])
        .map(|z| (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).filter(|&(r, c)| wt.data()[Axis::Z.voxel(dims, z, r, c)]).count())
        .collect()
}

/// Chosen slice index and whether the central fallback was used.
pub fn select_slice(wt: &Mask, policy: SlicePolicy) -> (usize, bool) {
    let central = wt.dims()[2] / 2;
    match policy {
        SlicePolicy::Central => (central, false),
        SlicePolicy::MaxWtArea => {
            let areas = axial_areas(wt);
            let best = areas.iter().enumerate().fold((0, 0), |b, (i, &a)| if a > b.1 { (i, a) } else { b });
            if best.1 == 0 {
                (central, true)
            } else {
                (best.0, false)
            }
        }
    }
}

/// Seven-channel representative slice plus scaled age.
pub fn build_input(case: &PatientCase, regions: &RegionMaskSet, policy: SlicePolicy) -> Result<SurvivalInput> {
    let clinical = case.clinical().ok_or_else(|| Error::MissingClinical(case.id().to_string()))?;
    let wt = regions.get(Region::Wt);
    if wt.dims() != case.dims() {
        return Err(Error::GeometryMismatch(format!(
            "case {} has dims {:?}, regions {:?}",
            case.id(),
            case.dims(),
            wt.dims()
        )));
    }
    let (z, fallback) = select_slice(wt, policy);
    let (h, w) = Axis::Z.plane(case.dims());
    let n = h * w;
    let mut data = vec![0.0; SURVIVAL_CHANNELS * n];
    for (ch, v) in case.modalities().iter().enumerate() {
        let v = normalize_intensity(v, NormTarget::Symmetric)?.volume;
        copy_slice(&v, Axis::Z, z, &mut data[ch * n..(ch + 1) * n]);
    }
    let dims = case.dims();
    for (k, r) in [Region::Wt, Region::Ct, Region::Et].into_iter().enumerate() {
        let m = regions.get(r).data();
        let out = &mut data[(4 + k) * n..(5 + k) * n];
        for row in 0..h {
            for col in 0..w {
                out[row * w + col] = if m[Axis::Z.voxel(dims, z, row, col)] { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(SurvivalInput {
        image: Tensor::new(&[SURVIVAL_CHANNELS, h, w], data)?,
        age: scale_age(clinical.age_years())? as f32,
        slice: z,
        fallback,
    })
}

/// Region masks from ground truth when present, else `None`.
pub fn truth_regions(case: &PatientCase) -> Option<RegionMaskSet> {
    case.truth().map(RegionMaskSet::from_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{generate_case, PhantomSpec};
    use crate::volume::ClinicalRecord;

    fn small(seed: u64) -> PhantomSpec {
        let mut s = PhantomSpec::new("s", seed);
        s.dims = [24, 20, 16];
        s.center = [11.0, 9.5, 9.0];
        s.r_wt = 6.0;
        s.r_ct = 4.0;
        s.r_et = 2.0;
        s.clinical = Some(ClinicalRecord::new(50.0, Some(800.0)).unwrap());
        s
    }

    #[test]
    fn seven_channels_binary_masks() {
        let case = generate_case(&small(3)).unwrap();
        let regions = truth_regions(&case).unwrap();
        let inp = build_input(&case, &regions, SlicePolicy::MaxWtArea).unwrap();
        assert_eq!(inp.image.shape(), &[7, 24, 20]);
        let n = 24 * 20;
        assert!(inp.image.data()[4 * n..].iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(inp.image.data()[..4 * n].iter().all(|&v| (-1.0..=1.0).contains(&v)));
        assert!(!inp.fallback);
    }

    #[test]
    fn max_area_matches_scan() {
        let case = generate_case(&small(5)).unwrap();
        let regions = truth_regions(&case).unwrap();
        let wt = regions.get(Region::Wt);
        let mut best = (0, 0);
        for z in 0..16 {
            let mut a = 0;
            for y in 0..20 {
                for x in 0..24 {
                    a += wt.get(x, y, z) as usize;
                }
            }
            if a > best.1 {
                best = (z, a);
            }
        }
        assert_eq!(select_slice(wt, SlicePolicy::MaxWtArea), (best.0, false));
    }

    #[test]
    fn tumor_free_falls_back() {
        let case = generate_case(&small(1)).unwrap();
        let dims = case.dims();
        let empty = Mask::from_fn(dims, case.spacing(), |_, _, _| false);
        let regions = RegionMaskSet::new(empty.clone(), empty.clone(), empty).unwrap();
        let a = build_input(&case, &regions, SlicePolicy::MaxWtArea).unwrap();
        let b = build_input(&case, &regions, SlicePolicy::Central).unwrap();
        assert_eq!((a.slice, b.slice), (8, 8));
        assert!(a.fallback && !b.fallback);
    }

    #[test]
    fn missing_clinical() {
        let case = generate_case(&small(1)).unwrap().with_clinical(None);
        let regions = truth_regions(&case).unwrap();
        assert!(matches!(build_input(&case, &regions, SlicePolicy::Central), Err(Error::MissingClinical(_))));
    }
}
