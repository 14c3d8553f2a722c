//! Seed-deterministic synthetic phantoms with known ground truth.
//!
//! A phantom is an ellipsoidal head (air outside is exactly 0) with a
//! spherical tumor: enhancing core (label 4) inside necrotic/non-enhancing
//! core (label 1) inside edema (label 2). Modality contrast comes from a
//! per-tissue table, then a smooth multiplicative bias and Gaussian noise
//! are applied inside the head.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume::{
    write_clinical_csv, write_patient_case, ClinicalRecord, PatientCase, Volume, VolumeKind,
};

/// Tissue classes in intensity-table column order.
pub const TISSUES: [&str; 4] = ["brain", "edema", "core", "enhancing"];

/// Relative intensities, `[modality][tissue]`, scaled by 100.
pub const DEFAULT_INTENSITIES: [[f32; 4]; 4] = [
    // T1: tumor darker
    [100.0, 80.0, 60.0, 70.0],
    // T1ce: enhancing rim bright
    [100.0, 90.0, 60.0, 180.0],
    // T2: edema bright
    [100.0, 160.0, 130.0, 120.0],
    // FLAIR: edema brightest
    [100.0, 180.0, 110.0, 130.0],
];

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub id: String,
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    /// Tumor centre in voxel coordinates.
    pub center: [f64; 3],
    /// Whole tumor, core and enhancing radii in voxels.
    pub r_wt: f64,
    pub r_ct: f64,
    pub r_et: f64,
    pub intensities: [[f32; 4]; 4],
    /// Log-domain bias terms `(exponents, coefficient)` over `[-1, 1]³`.
    pub bias: Vec<([u32; 3], f64)>,
    /// Noise standard deviation relative to brain intensity.
    pub noise_sigma: f64,
    pub seed: u64,
    pub clinical: Option<ClinicalRecord>,
}

impl PhantomSpec {
    /// A noise-free, bias-free 64³ phantom with a centred tumor.
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        PhantomSpec {
            id: id.into(),
            dims: [64; 3],
            spacing: [1.0; 3],
            center: [31.5; 3],
            r_wt: 14.0,
            r_ct: 9.0,
            r_et: 5.0,
            intensities: DEFAULT_INTENSITIES,
            bias: Vec::new(),
            noise_sigma: 0.0,
            seed,
            clinical: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_et > 0.0 && self.r_ct > self.r_et && self.r_wt > self.r_ct) {
            return Err(Error::InvalidParameter(format!(
                "radii must satisfy r_wt > r_ct > r_et > 0, got {} / {} / {}",
                self.r_wt, self.r_ct, self.r_et
            )));
        }
        for a in 0..3 {
            let (c, n) = (self.center[a], self.dims[a] as f64);
            if c - self.r_wt < 0.0 || c + self.r_wt > n - 1.0 {
                return Err(Error::InvalidParameter(format!("tumor leaves the volume along axis {a}")));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Head ellipsoid semi-axes, in voxels.
    fn head_axes(&self) -> [f64; 3] {
        self.dims.map(|n| 0.46 * n as f64)
    }

    fn head_center(&self) -> [f64; 3] {
        self.dims.map(|n| (n as f64 - 1.0) / 2.0)
    }
}

fn norm_coord(i: usize, n: usize) -> f64 {
    if n <= 1 { 0.0 } else { 2.0 * i as f64 / (n - 1) as f64 - 1.0 }
}

/// Label of voxel `p` for the tumor in `spec`.
pub fn phantom_label(spec: &PhantomSpec, p: [usize; 3]) -> u8 {
    let d2: f64 = (0..3).map(|a| (p[a] as f64 - spec.center[a]).powi(2)).sum();
    if d2 <= spec.r_et * spec.r_et {
        4
    } else if d2 <= spec.r_ct * spec.r_ct {
        1
    } else if d2 <= spec.r_wt * spec.r_wt {
        2
    } else {
        0
    }
}

fn in_head(spec: &PhantomSpec, p: [usize; 3]) -> bool {
    let (c, r) = (spec.head_center(), spec.head_axes());
    (0..3).map(|a| ((p[a] as f64 - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
}

pub fn generate_case(spec: &PhantomSpec) -> Result<PatientCase> {
    spec.validate()?;
    let dims = spec.dims;
    let n: usize = dims.iter().product();
    let mut labels = vec![0f32; n];
    let mut tissue = vec![None::<usize>; n];
    let mut bias = vec![1f64; n];
    let mut i = 0;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x, y, z];
                let lab = phantom_label(spec, p);
                labels[i] = lab as f32;
                if in_head(spec, p) || lab != 0 {
                    tissue[i] = Some(match lab {
                        0 => 0,
                        2 => 1,
                        1 => 2,
                        _ => 3,
                    });
                }
                let c = [norm_coord(x, dims[0]), norm_coord(y, dims[1]), norm_coord(z, dims[2])];
                let f: f64 = spec
                    .bias
                    .iter()
                    .map(|(e, k)| k * c[0].powi(e[0] as i32) * c[1].powi(e[1] as i32) * c[2].powi(e[2] as i32))
                    .sum();
                bias[i] = f.exp();
                i += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let floor = 1e-3 * spec.intensities[0][0] as f64;
    let mut mods = Vec::with_capacity(4);
    for m in 0..4 {
        let table = spec.intensities[m];
        let data: Vec<f32> = (0..n)
            .map(|i| match tissue[i] {
                None => 0.0,
                Some(t) => {
                    let base = table[t] as f64 * bias[i];
                    let eps = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (base + eps * table[0] as f64).max(floor) as f32
                }
            })
            .collect();
        mods.push(Volume::new(dims, spec.spacing, data, VolumeKind::Intensity)?);
    }
    let truth = Volume::new(dims, spec.spacing, labels, VolumeKind::Label)?;
    PatientCase::new(spec.id.clone(), mods.try_into().expect("four modalities"), Some(truth), spec.clinical.clone())
}

/// Ranges for randomised datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    /// Maximum centre offset from the volume centre, voxels.
    pub center_jitter: f64,
    pub r_wt: (f64, f64),
    /// `r_ct / r_wt` range.
    pub ct_ratio: (f64, f64),
    /// `r_et / r_ct` range.
    pub et_ratio: (f64, f64),
    pub age: (f64, f64),
    /// Largest magnitude of each linear and quadratic bias coefficient.
    pub bias_magnitude: f64,
    pub noise_sigma: f64,
    /// Standard deviation of the survival noise, days.
    pub survival_noise_days: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            dims: [64; 3],
            spacing: [1.0; 3],
            center_jitter: 6.0,
            r_wt: (9.0, 17.0),
            ct_ratio: (0.5, 0.75),
            et_ratio: (0.4, 0.65),
            age: (20.0, 80.0),
            bias_magnitude: 0.15,
            noise_sigma: 0.04,
            survival_noise_days: 60.0,
        }
    }
}

impl DatasetSpec {
    /// Default ranges for a cube of side `side`, with radii and centre
    /// jitter scaled from the 64³ defaults.
    pub fn cube(side: usize) -> Self {
        let d = DatasetSpec::default();
        let k = side as f64 / d.dims[0] as f64;
        DatasetSpec {
            dims: [side; 3],
            center_jitter: d.center_jitter * k,
            r_wt: (d.r_wt.0 * k, d.r_wt.1 * k),
            ..d
        }
    }
}

/// Survival days planted for a whole-tumor radius: linear decrease in
/// tumor volume over the dataset's radius range.
pub fn planted_survival(r_wt: f64, range: (f64, f64)) -> f64 {
    let v = |r: f64| r.powi(3);
    let t = if range.1 > range.0 { (v(r_wt) - v(range.0)) / (v(range.1) - v(range.0)) } else { 0.5 };
    1650.0 - 1300.0 * t.clamp(0.0, 1.0)
}

/// Specs for `n` phantoms with ids `ph<seed>_<i>`.
pub fn dataset_specs(n: usize, base_seed: u64, ranges: &DatasetSpec) -> Result<Vec<PhantomSpec>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dataset size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ 0x5eed_da7a);
    let surv_noise = Normal::new(0.0, ranges.survival_noise_days).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = PhantomSpec::new(format!("ph{base_seed}_{i:03}"), base_seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        s.dims = ranges.dims;
        s.spacing = ranges.spacing;
        s.r_wt = rng.random_range(ranges.r_wt.0..=ranges.r_wt.1);
        s.r_ct = s.r_wt * rng.random_range(ranges.ct_ratio.0..=ranges.ct_ratio.1);
        s.r_et = s.r_ct * rng.random_range(ranges.et_ratio.0..=ranges.et_ratio.1);
        for a in 0..3 {
            let mid = (ranges.dims[a] as f64 - 1.0) / 2.0;
            let room = (mid - s.r_wt - 1.0).max(0.0).min(ranges.center_jitter);
            s.center[a] = mid + rng.random_range(-room..=room);
        }
        let b = ranges.bias_magnitude;
        if b > 0.0 {
            for e in [[1, 0, 0], [0, 1, 0], [0, 0, 1], [2, 0, 0], [0, 2, 0], [0, 0, 2]] {
                s.bias.push((e, rng.random_range(-b..=b)));
            }
        }
        s.noise_sigma = ranges.noise_sigma;
        let age = rng.random_range(ranges.age.0..=ranges.age.1);
        let surv = (planted_survival(s.r_wt, ranges.r_wt) + surv_noise.sample(&mut rng)).clamp(0.0, 1750.0);
        s.clinical = Some(ClinicalRecord::new(age, Some(surv))?);
        out.push(s);
    }
    Ok(out)
}

/// `n` phantom cases, sorted by id, each with a clinical record.
pub fn generate_dataset(n: usize, base_seed: u64, ranges: &DatasetSpec) -> Result<Vec<PatientCase>> {
    dataset_specs(n, base_seed, ranges)?.iter().map(generate_case).collect()
}

/// Writes case directories and `clinical.csv` under `out`.
pub fn write_dataset(cases: &[PatientCase], out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let mut records = BTreeMap::new();
    for c in cases {
        write_patient_case(c, out)?;
        if let Some(r) = c.clinical() {
            records.insert(c.id(), r);
        }
    }
    write_clinical_csv(out.join("clinical.csv"), records.into_iter())
}
