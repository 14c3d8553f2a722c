//! Closed-form polynomial regression on clinical and volumetric features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::{Region, RegionMaskSet};

pub const MAX_POLY_DEGREE: usize = 3;
pub const RIDGE_LAMBDA: f64 = 1e-6;

/// `[age, wt, ct, et]`: scaled age and region volumes as fractions of the
/// whole grid.
pub fn baseline_features(scaled_age: f64, regions: &RegionMaskSet) -> Vec<f64> {
    let total = regions.wt.len().max(1) as f64;
    let mut f = vec![scaled_age];
    f.extend([Region::Wt, Region::Ct, Region::Et].map(|r| regions.get(r).count() as f64 / total));
    f
}

/// Exponent vectors of every monomial of total degree ≤ `degree` in `k`
/// variables, by degree and then lexicographically descending.
fn monomials(k: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(k, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree as u32 {
        rec(k, d, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialModel {
    pub degree: usize,
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    /// The normal matrix was singular and a ridge term was added.
    pub ridge: bool,
}

impl PolynomialModel {
    fn row(&self, x: &[f64]) -> Vec<f64> {
        self.exponents.iter().map(|e| e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product()).collect()
    }

    /// Prediction clamped to [0, 1].
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let k = self.exponents.first().map_or(0, Vec::len);
        if x.len() != k {
            return Err(Error::GeometryMismatch(format!("{} features for a model of {k}", x.len())));
        }
        let y: f64 = self.row(x).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
        Ok(y.clamp(0.0, 1.0))
    }

    /// Coefficient of the monomial with exponents `e`.
    pub fn coefficient(&self, e: &[u32]) -> Option<f64> {
        self.exponents.iter().position(|x| x == e).map(|i| self.coefficients[i])
    }
}

/// Least squares over all monomials of total degree ≤ `degree`. Targets are
/// in scaled survival space.
pub fn polynomial_baseline(features: &[Vec<f64>], targets: &[f64], degree: usize) -> Result<PolynomialModel> {
    if degree > MAX_POLY_DEGREE {
        return Err(Error::InvalidParameter(format!("degree {degree} above {MAX_POLY_DEGREE}")));
    }
    if features.len() != targets.len() {
        return Err(Error::GeometryMismatch(format!("{} feature rows for {} targets", features.len(), targets.len())));
    }
    if features.len() < degree + 1 {
        return Err(Error::InvalidParameter(format!("degree {degree} needs at least {} samples", degree + 1)));
    }
    let k = features[0].len();
    if k == 0 || features.iter().any(|f| f.len() != k) {
        return Err(Error::GeometryMismatch("feature rows must share a positive length".into()));
    }
    if features.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite feature or target".into()));
    }
    let mut model = PolynomialModel { degree, exponents: monomials(k, degree), coefficients: Vec::new(), ridge: false };
    let m = model.exponents.len();
    let x = DMatrix::from_row_iterator(features.len(), m, features.iter().flat_map(|f| model.row(f)));
    let y = DVector::from_column_slice(targets);
    let a = x.transpose() * &x;
    let b = x.transpose() * y;
    let solved = nalgebra::Cholesky::new(a.clone()).filter(|c| {
        let d = c.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
        // reciprocal condition estimate of the normal matrix
        hi > 0.0 && (lo / hi).powi(2) > 1e-14
    });
    let coef = match solved {
        Some(c) => c.solve(&b),
        None => {
            model.ridge = true;
            let reg = a + DMatrix::identity(m, m) * RIDGE_LAMBDA;
            nalgebra::Cholesky::new(reg)
                .ok_or_else(|| Error::InvariantViolation("regularized normal matrix is not positive definite".into()))?
                .solve(&b)
        }
    };
    model.coefficients = coef.iter().copied().collect();
    Ok(model)
}
