use super::Mask;
use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(pred: &Mask, truth: &Mask) -> Result<Confusion> {
    pred.require_same_geometry(truth)?;
    let mut c = Confusion::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiceScore {
    pub value: f64,
    /// Both masks empty; `value` is 1 by convention.
    pub both_empty: bool,
}

impl Confusion {
    pub fn dice(&self) -> DiceScore {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            DiceScore { value: 1.0, both_empty: true }
        } else {
            DiceScore { value: 2.0 * self.tp as f64 / denom as f64, both_empty: false }
        }
    }

    /// `None` when the truth is empty.
    pub fn sensitivity(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when the truth covers the whole grid.
    pub fn specificity(&self) -> Option<f64> {
        let d = self.tn + self.fp;
        (d > 0).then(|| self.tn as f64 / d as f64)
    }
}

pub fn dice(pred: &Mask, truth: &Mask) -> Result<DiceScore> {
    Ok(confusion(pred, truth)?.dice())
}

pub fn sensitivity(pred: &Mask, truth: &Mask) -> Result<Option<f64>> {
    Ok(confusion(pred, truth)?.sensitivity())
}

pub fn specificity(pred: &Mask, truth: &Mask) -> Result<Option<f64>> {
    Ok(confusion(pred, truth)?.specificity())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(bits: &[u8]) -> Mask {
        Mask::new([bits.len(), 1, 1], [1.0; 3], bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn hand_counted() {
        let p = line(&[1, 1, 0, 0]);
        let t = line(&[0, 1, 1, 0]);
        assert_eq!(dice(&p, &t).unwrap().value, 0.5);

        // TP=3, FN=1, FP=2, TN=10
        let mut pb = vec![1, 1, 1, 0, 1, 1];
        let mut tb = vec![1, 1, 1, 1, 0, 0];
        pb.extend([0; 10]);
        tb.extend([0; 10]);
        let c = confusion(&line(&pb), &line(&tb)).unwrap();
        assert_eq!(c, Confusion { tp: 3, fp: 2, fn_: 1, tn: 10 });
        assert_eq!(c.sensitivity(), Some(0.75));
        assert_eq!(c.specificity(), Some(10.0 / 12.0));
    }

    #[test]
    fn degenerate_cases_are_flagged() {
        let e = line(&[0, 0]);
        assert_eq!(dice(&e, &e).unwrap(), DiceScore { value: 1.0, both_empty: true });
        assert_eq!(sensitivity(&e, &e).unwrap(), None);
        let f = line(&[1, 1]);
        assert_eq!(specificity(&f, &f).unwrap(), None);
        let ones = line(&[1, 1, 1]);
        let t = line(&[0, 1, 0]);
        assert_eq!(sensitivity(&ones, &t).unwrap(), Some(1.0));
        assert_eq!(specificity(&ones, &t).unwrap(), Some(0.0));
    }

    #[test]
    fn geometry_mismatch() {
        assert!(dice(&line(&[1]), &line(&[1, 0])).is_err());
    }
}
