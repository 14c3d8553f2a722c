use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train/validation/test fractions and the shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 0.7, val: 0.1, test: 0.2, seed: 1 }
    }
}

/// Indices into the sorted case list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || ((f.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("split fractions {f:?} must lie in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// Sizes for `n` cases: validation and test are floored, training takes
    /// the rest (163 → 115/16/32).
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        // the epsilon keeps 0.1·n from landing just under an integer
        let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
        let (val, test) = (floor(self.val), floor(self.test));
        Ok((n - val - test, val, test))
    }

    /// Seeded partition of `0..n`. Each part is returned in ascending order.
    pub fn split(&self, n: usize) -> Result<Split> {
        let (_, nv, nt) = self.sizes(n)?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let sorted = |s: &[usize]| {
            let mut v = s.to_vec();
            v.sort_unstable();
            v
        };
        Ok(Split { val: sorted(&idx[..nv]), test: sorted(&idx[nv..nv + nt]), train: sorted(&idx[nv + nt..]) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_sizes() {
        assert_eq!(SplitSpec::default().sizes(163).unwrap(), (115, 16, 32));
        assert_eq!(SplitSpec::default().sizes(50).unwrap(), (35, 5, 10));
        assert_eq!(SplitSpec::default().sizes(4).unwrap(), (4, 0, 0));
    }

    #[test]
    fn partition_is_exhaustive_and_seeded() {
        let s = SplitSpec::default().split(37).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(s, SplitSpec::default().split(37).unwrap());
        assert_ne!(s, SplitSpec { seed: 2, ..SplitSpec::default() }.split(37).unwrap());
    }

    #[test]
    fn bad_fractions() {
        assert!(SplitSpec { train: 0.8, ..SplitSpec::default() }.split(10).is_err());
        assert!(SplitSpec { train: 1.2, val: -0.2, test: 0.0, seed: 0 }.split(10).is_err());
    }
}
