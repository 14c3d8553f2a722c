use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormTarget {
    /// `[0, 1]`
    Unit,
    /// `[-1, 1]`, the range of a tanh output.
    Symmetric,
}

impl NormTarget {
    pub fn range(self) -> (f32, f32) {
        match self {
            NormTarget::Unit => (0.0, 1.0),
            NormTarget::Symmetric => (-1.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub volume: Volume,
    /// Input was constant; output is the midpoint of the target range.
    pub constant_input: bool,
}

/// Affine map of `[min, max]` onto the target range, exact at both ends.
pub fn normalize_intensity(v: &Volume, target: NormTarget) -> Result<Normalized> {
    if v.kind() != VolumeKind::Intensity {
        return Err(Error::InvalidParameter("normalization needs an intensity volume".into()));
    }
    let (lo, hi) = target.range();
    let (min, max) = v.min_max();
    if min == max {
        let mid = 0.5 * (lo + hi);
        return Ok(Normalized { volume: v.with_data(vec![mid; v.len()], VolumeKind::Intensity)?, constant_input: true });
    }
    if (min, max) == (lo, hi) {
        return Ok(Normalized { volume: v.clone(), constant_input: false });
    }
    let scale = (hi as f64 - lo as f64) / (max as f64 - min as f64);
    let out = v
        .data()
        .iter()
        .map(|&x| {
            if x == min {
                lo
            } else if x == max {
                hi
            } else {
                ((lo as f64 + (x as f64 - min as f64) * scale) as f32).clamp(lo, hi)
            }
        })
        .collect();
    Ok(Normalized { volume: v.with_data(out, VolumeKind::Intensity)?, constant_input: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(data: Vec<f32>) -> Volume {
        Volume::new([data.len(), 1, 1], [1.0; 3], data, VolumeKind::Intensity).unwrap()
    }

    #[test]
    fn maps_endpoints() {
        let n = normalize_intensity(&vol(vec![0.0, 5.0, 10.0]), NormTarget::Symmetric).unwrap();
        assert_eq!(n.volume.data(), &[-1.0, 0.0, 1.0]);
        let u = normalize_intensity(&vol(vec![3.0, 4.0, 5.0]), NormTarget::Unit).unwrap();
        assert_eq!(u.volume.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_is_flagged() {
        let n = normalize_intensity(&vol(vec![2.0; 3]), NormTarget::Symmetric).unwrap();
        assert!(n.constant_input);
        assert_eq!(n.volume.data(), &[0.0; 3]);
        let u = normalize_intensity(&vol(vec![2.0; 3]), NormTarget::Unit).unwrap();
        assert_eq!(u.volume.data(), &[0.5; 3]);
    }
}
