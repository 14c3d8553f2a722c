//! Clinical scaling and the within-tolerance accuracy criterion.

use crate::error::{Error, Result};

pub const MAX_AGE_YEARS: f64 = 100.0;
pub const MAX_SURVIVAL_DAYS: f64 = 1750.0;
pub const DEFAULT_TOLERANCE_DAYS: f64 = 180.0;

fn check(x: f64, hi: f64, what: &str) -> Result<()> {
    if x.is_finite() && (0.0..=hi).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} {x} outside [0, {hi}]")))
    }
}

/// Years in [0, 100] onto [0, 1].
pub fn scale_age(years: f64) -> Result<f64> {
    check(years, MAX_AGE_YEARS, "age")?;
    Ok(years / MAX_AGE_YEARS)
}

/// Days in [0, 1750] onto [0, 1].
pub fn scale_survival(days: f64) -> Result<f64> {
    check(days, MAX_SURVIVAL_DAYS, "survival days")?;
    Ok(days / MAX_SURVIVAL_DAYS)
}

pub fn unscale_survival(u: f64) -> Result<f64> {
    check(u, 1.0, "scaled survival")?;
    Ok(u * MAX_SURVIVAL_DAYS)
}

/// Integral days, halves rounded up.
pub fn round_days(days: f64) -> i64 {
    (days + 0.5).floor() as i64
}

/// Fraction of cases predicted within `tolerance_days` of the truth.
pub fn accuracy(preds: &[f64], truths: &[f64], tolerance_days: f64) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::GeometryMismatch(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions".into()));
    }
    if !(tolerance_days >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance_days} must be non-negative")));
    }
    let hits = preds.iter().zip(truths).filter(|(p, t)| (*p - *t).abs() <= tolerance_days).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(scale_age(50.0).unwrap(), 0.5);
        assert_eq!(scale_survival(1750.0).unwrap(), 1.0);
        assert_eq!(scale_survival(0.0).unwrap(), 0.0);
        assert_eq!(unscale_survival(1.0).unwrap(), 1750.0);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(scale_age(100.5), Err(Error::InvalidParameter(_))));
        assert!(scale_age(-1.0).is_err());
        assert!(scale_survival(1751.0).is_err());
        assert!(scale_survival(f64::NAN).is_err());
        assert!(unscale_survival(1.01).is_err());
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round_days(10.5), 11);
        assert_eq!(round_days(10.49), 10);
        assert_eq!(round_days(0.0), 0);
        assert_eq!(round_days(1749.5), 1750);
    }

    #[test]
    fn accuracy_counts() {
        let t = [100.0, 500.0, 900.0, 1300.0];
        assert_eq!(accuracy(&t, &t, 180.0).unwrap(), 1.0);
        let far: Vec<f64> = t.iter().map(|x| x + 181.0).collect();
        assert_eq!(accuracy(&far, &t, 180.0).unwrap(), 0.0);
        let mixed = [100.0, 690.0, 720.0, 1200.0];
        assert_eq!(accuracy(&mixed, &t, 180.0).unwrap(), 0.75);
        assert_eq!(accuracy(&[180.0], &[0.0], 180.0).unwrap(), 1.0);
        assert!(accuracy(&[1.0], &[], 180.0).is_err());
    }
}
