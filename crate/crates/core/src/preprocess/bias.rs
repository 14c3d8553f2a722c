//! A smooth multiplicative bias model fitted in the log domain.
//!
//! `log v(p) ≈ Σ_k c_k · m_k(p)` plus tissue contrast, where `m_k` are the
//! monomials `x^a y^b z^c` (`a + b + c ≤ order`) of coordinates scaled to
//! `[-1, 1]`. The first coefficient is the constant term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeKind};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct BiasModel {
    dims: [usize; 3],
    order: usize,
    threshold: f32,
    exponents: Vec<[u32; 3]>,
    coefficients: Vec<f64>,
}

fn exponents(order: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for deg in 0..=order as u32 {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                out.push([a, b, deg - a - b]);
            }
        }
    }
    out
}

fn norm_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

/// Powers `c^0..=c^order` for each axis coordinate.
fn powers(c: f64, order: usize, out: &mut [f64]) {
    out[0] = 1.0;
    for k in 1..=order {
        out[k] = out[k - 1] * c;
    }
}

impl BiasModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    /// Monomial exponents `[a, b, c]`, parallel to [`coefficients`](Self::coefficients).
    pub fn exponents(&self) -> &[[u32; 3]] {
        &self.exponents
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Coefficient of `x^a y^b z^c`, zero if the monomial is not in the model.
    pub fn coefficient(&self, e: [u32; 3]) -> f64 {
        self.exponents.iter().position(|&x| x == e).map_or(0.0, |i| self.coefficients[i])
    }

    /// Largest magnitude among non-constant coefficients.
    pub fn max_nonconstant(&self) -> f64 {
        self.coefficients.iter().skip(1).fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Log-domain field over the whole grid, without the constant term.
    pub fn log_field(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let o = self.order;
        let (mut px, mut py, mut pz) = (vec![0.0; o + 1], vec![0.0; o + 1], vec![0.0; o + 1]);
        let mut out = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            powers(norm_coord(z, nz), o, &mut pz);
            for y in 0..ny {
                powers(norm_coord(y, ny), o, &mut py);
                for x in 0..nx {
                    powers(norm_coord(x, nx), o, &mut px);
                    let mut f = 0.0;
                    for (e, c) in self.exponents.iter().zip(&self.coefficients).skip(1) {
                        f += c * px[e[0] as usize] * py[e[1] as usize] * pz[e[2] as usize];
                    }
                    out.push(f);
                }
            }
        }
        out
    }
}

fn require_intensity(v: &Volume) -> Result<()> {
    if v.kind() != VolumeKind::Intensity {
        return Err(Error::InvalidParameter("bias correction needs an intensity volume".into()));
    }
    Ok(())
}

/// Fits the field to log-intensity differences between face-adjacent
/// foreground voxels.
///
/// Working on differences keeps piecewise-constant tissue contrast out of
/// the field: pairs straddling a tissue boundary have outlying residuals and
/// are dropped by a few rounds of median-based trimming. The constant term is
/// then the foreground mean of `log v` minus the field.
///
/// Rank-deficient systems fall back to lower orders, down to the constant
/// model, so fitting only fails on an empty foreground.
pub fn fit_bias(v: &Volume, order: usize, threshold: f32) -> Result<BiasModel> {
    require_intensity(v)?;
    if order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!("bias order {order} exceeds {MAX_ORDER}")));
    }
    let data = v.data();
    let fg: Vec<usize> = (0..v.len()).filter(|&i| data[i] > threshold).collect();
    if fg.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let dims = v.dims();
    let logv: Vec<f64> = data.iter().map(|&x| if x > threshold { (x as f64).ln() } else { 0.0 }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut pairs = Vec::new();
    for &i in &fg {
        let c = v.coords(i);
        for a in 0..3 {
            if c[a] + 1 < dims[a] && data[i + strides[a]] > threshold {
                pairs.push((i, i + strides[a]));
            }
        }
    }
    let mut order = order;
    loop {
        let ex = exponents(order);
        let m = ex.len() - 1;
        if m == 0 || pairs.is_empty() {
            return Ok(finish(v, &fg, &logv, 0, threshold, vec![]));
        }
        let mono = |i: usize, out: &mut [f64], px: &mut [f64], py: &mut [f64], pz: &mut [f64]| {
            let [x, y, z] = v.coords(i);
            powers(norm_coord(x, dims[0]), order, px);
            powers(norm_coord(y, dims[1]), order, py);
            powers(norm_coord(z, dims[2]), order, pz);
            for (r, e) in out.iter_mut().zip(&ex[1..]) {
                *r = px[e[0] as usize] * py[e[1] as usize] * pz[e[2] as usize];
            }
        };
        let (mut px, mut py, mut pz) = (vec![0.0; order + 1], vec![0.0; order + 1], vec![0.0; order + 1]);
        let (mut r0, mut r1) = (vec![0.0; m], vec![0.0; m]);
        let mut rows = Vec::with_capacity(pairs.len() * m);
        let mut diffs = Vec::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            mono(i, &mut r0, &mut px, &mut py, &mut pz);
            mono(j, &mut r1, &mut px, &mut py, &mut pz);
            rows.extend(r1.iter().zip(&r0).map(|(b, a)| b - a));
            diffs.push(logv[j] - logv[i]);
        }
        let mut keep = vec![true; pairs.len()];
        let mut sol = None;
        for _round in 0..6 {
            let mut gram = DMatrix::<f64>::zeros(m, m);
            let mut rhs = DVector::<f64>::zeros(m);
            for (k, row) in rows.chunks_exact(m).enumerate() {
                if !keep[k] {
                    continue;
                }
                for a in 0..m {
                    rhs[a] += row[a] * diffs[k];
                    for b in a..m {
                        gram[(a, b)] += row[a] * row[b];
                    }
                }
            }
            for a in 0..m {
                for b in 0..a {
                    gram[(a, b)] = gram[(b, a)];
                }
            }
            let svd = gram.svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if !(smin > smax * 1e-10) {
                sol = None;
                break;
            }
            let s = svd.solve(&rhs, smax * 1e-12).map_err(|e| Error::InvariantViolation(e.to_string()))?;
            let resid: Vec<f64> = rows
                .chunks_exact(m)
                .zip(&diffs)
                .map(|(row, d)| (d - row.iter().zip(s.iter()).map(|(a, b)| a * b).sum::<f64>()).abs())
                .collect();
            sol = Some(s);
            let mut sorted: Vec<f64> = resid.iter().zip(&keep).filter(|(_, &k)| k).map(|(r, _)| *r).collect();
            sorted.sort_by(f64::total_cmp);
            let tau = (3.5 * 1.4826 * sorted[sorted.len() / 2]).max(1e-3);
            let next: Vec<bool> = resid.iter().map(|&r| r <= tau).collect();
            if next == keep {
                break;
            }
            keep = next;
        }
        match sol {
            Some(s) => return Ok(finish(v, &fg, &logv, order, threshold, s.iter().copied().collect())),
            None => order -= 1,
        }
    }
}

fn finish(v: &Volume, fg: &[usize], logv: &[f64], order: usize, threshold: f32, rest: Vec<f64>) -> BiasModel {
    let mut model = BiasModel { dims: v.dims(), order, threshold, exponents: exponents(order), coefficients: vec![0.0] };
    model.coefficients.extend(rest);
    let field = model.log_field();
    model.coefficients[0] = fg.iter().map(|&i| logv[i] - field[i]).sum::<f64>() / fg.len() as f64;
    model
}

/// Divides out the fitted field and rescales so the foreground mean is kept.
pub fn correct_bias(v: &Volume, model: &BiasModel) -> Result<Volume> {
    require_intensity(v)?;
    if v.dims() != model.dims {
        return Err(Error::GeometryMismatch(format!("model for {:?}, volume {:?}", model.dims, v.dims())));
    }
    if model.coefficients.iter().skip(1).all(|&c| c == 0.0) {
        return Ok(v.clone());
    }
    let field = model.log_field();
    let mut out: Vec<f64> = v.data().iter().zip(&field).map(|(&x, f)| x as f64 * (-f).exp()).collect();
    let (mut before, mut after, mut n) = (0.0, 0.0, 0usize);
    for (&x, &y) in v.data().iter().zip(&out) {
        if x > model.threshold {
            before += x as f64;
            after += y;
            n += 1;
        }
    }
    if n > 0 && after != 0.0 {
        let gain = before / after;
        for y in &mut out {
            *y *= gain;
        }
    }
    v.with_data(out.into_iter().map(|y| y as f32).collect(), VolumeKind::Intensity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biased(c: f64) -> Volume {
        Volume::from_fn([12, 10, 8], [1.0; 3], VolumeKind::Intensity, |x, _, _| {
            (100.0 * (c * norm_coord(x, 12)).exp()) as f32
        })
        .unwrap()
    }

    #[test]
    fn monomial_count() {
        assert_eq!(exponents(0).len(), 1);
        assert_eq!(exponents(1).len(), 4);
        assert_eq!(exponents(2).len(), 10);
        assert_eq!(exponents(4).len(), 35);
    }

    #[test]
    fn recovers_linear_field() {
        let m = fit_bias(&biased(0.2), 2, 0.0).unwrap();
        assert!((m.coefficient([1, 0, 0]) - 0.2).abs() < 1e-3);
        assert!((m.coefficients()[0] - 100f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn constant_volume_has_no_field() {
        let m = fit_bias(&biased(0.0), 3, 0.0).unwrap();
        assert!(m.max_nonconstant() < 1e-9);
    }

    #[test]
    fn order_zero_is_mean_log_and_identity() {
        let v = biased(0.3);
        let m = fit_bias(&v, 0, 0.0).unwrap();
        let mean_log = v.data().iter().map(|&x| (x as f64).ln()).sum::<f64>() / v.len() as f64;
        assert!((m.coefficients()[0] - mean_log).abs() < 1e-9);
        assert_eq!(correct_bias(&v, &m).unwrap(), v);
    }

    #[test]
    fn rank_deficiency_falls_back() {
        // All foreground on a single x-plane: x-monomials are collinear.
        let v = Volume::from_fn([4, 4, 4], [1.0; 3], VolumeKind::Intensity, |x, y, _| {
            if x == 1 { 1.0 + y as f32 } else { 0.0 }
        })
        .unwrap();
        let m = fit_bias(&v, 2, 0.0).unwrap();
        assert!(m.order() < 2);
        let single = Volume::from_fn([3, 3, 3], [1.0; 3], VolumeKind::Intensity, |x, y, z| {
            if (x, y, z) == (1, 1, 1) { 5.0 } else { 0.0 }
        })
        .unwrap();
        assert_eq!(fit_bias(&single, 3, 0.0).unwrap().order(), 0);
    }

    #[test]
    fn errors() {
        let zero = Volume::from_fn([2, 2, 2], [1.0; 3], VolumeKind::Intensity, |_, _, _| 0.0).unwrap();
        assert!(matches!(fit_bias(&zero, 1, 0.0), Err(Error::EmptyForeground)));
        let lab = Volume::from_fn([2, 2, 2], [1.0; 3], VolumeKind::Label, |_, _, _| 1.0).unwrap();
        assert!(fit_bias(&lab, 1, 0.0).is_err());
        let m = fit_bias(&biased(0.1), 1, 0.0).unwrap();
        assert!(correct_bias(&lab, &m).is_err());
        let other = Volume::from_fn([2, 2, 2], [1.0; 3], VolumeKind::Intensity, |_, _, _| 1.0).unwrap();
        assert!(matches!(correct_bias(&other, &m), Err(Error::GeometryMismatch(_))));
    }
}
