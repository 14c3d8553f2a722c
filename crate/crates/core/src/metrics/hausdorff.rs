//! Surface extraction and percentile Hausdorff distance.
//!
//! Directed distances are read from an exact anisotropic Euclidean distance
//! transform of the other mask's surface (separable lower-envelope method).

use super::Mask;
use crate::error::{Error, Result};

/// Surface voxels: mask voxels with at least one face neighbour outside the
/// mask. Neighbours beyond the grid count as outside.
pub fn surface(m: &Mask) -> Mask {
    let [nx, ny, nz] = m.dims();
    let d = m.data();
    let mut out = vec![false; d.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !d[i] {
                    continue;
                }
                out[i] = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || !d[i - 1]
                    || !d[i + 1]
                    || !d[i - nx]
                    || !d[i + nx]
                    || !d[i - nx * ny]
                    || !d[i + nx * ny];
            }
        }
    }
    Mask::new(m.dims(), m.spacing(), out).expect("same geometry")
}

/// Squared distance transform of a sampled function along one line:
/// `d[i] = min_j (s·(i − j))² + f[j]`, with `f[j] = ∞` for non-sites.
fn edt_1d(f: &[f64], s: f64, d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        let pq = q as f64 * s;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                break;
            }
            let p = v[k as usize];
            let pp = p as f64 * s;
            let cut = ((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp));
            if cut <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = cut;
                break;
            }
        }
    }
    if k < 0 {
        d.fill(f64::INFINITY);
        return;
    }
    let k = k as usize;
    let mut j = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let x = q as f64 * s;
        while j < k && z[j + 1] < x {
            j += 1;
        }
        let p = v[j];
        let dx = x - p as f64 * s;
        *out = dx * dx + f[p];
    }
}

/// Euclidean distance in millimetres from every voxel to the nearest `true`
/// voxel of `sites`. All infinite when `sites` is empty.
pub fn distance_transform(sites: &Mask) -> Vec<f64> {
    let dims = sites.dims();
    let sp = sites.spacing().map(|s| s as f64);
    let mut g: Vec<f64> = sites.data().iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let nmax = *dims.iter().max().unwrap();
    let (mut f, mut d, mut v, mut z) = (vec![0.0; nmax], vec![0.0; nmax], vec![0usize; nmax], vec![0.0; nmax + 1]);
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for a in 0..dims[o1] {
            for b in 0..dims[o2] {
                let base = a * strides[o1] + b * strides[o2];
                for i in 0..n {
                    f[i] = g[base + i * stride];
                }
                edt_1d(&f[..n], sp[axis], &mut d[..n], &mut v[..n], &mut z[..n + 1]);
                for i in 0..n {
                    g[base + i * stride] = d[i];
                }
            }
        }
    }
    for x in &mut g {
        *x = x.sqrt();
    }
    g
}

/// Nearest-rank percentile of unsorted values.
fn percentile(mut xs: Vec<f64>, q: f64) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q / 100.0) * xs.len() as f64).ceil() as usize;
    xs[rank.clamp(1, xs.len()) - 1]
}

fn directed(from: &Mask, to_dt: &[f64]) -> Vec<f64> {
    from.data().iter().zip(to_dt).filter(|(&b, _)| b).map(|(_, &d)| d).collect()
}

/// Percentile Hausdorff distance together with the classical (100th) one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HausdorffPair {
    pub percentile: f64,
    pub max: f64,
}

/// Symmetric percentile Hausdorff distance between the surfaces of two masks,
/// in millimetres. `None` if either mask is empty.
pub fn hausdorff(pred: &Mask, truth: &Mask, percentile_q: f64) -> Result<Option<HausdorffPair>> {
    pred.require_same_geometry(truth)?;
    if !(percentile_q > 0.0 && percentile_q <= 100.0) {
        return Err(Error::InvalidParameter(format!("percentile {percentile_q} outside (0, 100]")));
    }
    let (sp, st) = (surface(pred), surface(truth));
    if sp.count() == 0 || st.count() == 0 {
        return Ok(None);
    }
    let a = directed(&sp, &distance_transform(&st));
    let b = directed(&st, &distance_transform(&sp));
    let max = a.iter().chain(&b).fold(0.0f64, |m, &x| m.max(x));
    Ok(Some(HausdorffPair { percentile: percentile(a, percentile_q).max(percentile(b, percentile_q)), max }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxels() {
        let a = Mask::from_fn([5, 5, 1], [1.0; 3], |x, y, _| x == 0 && y == 0);
        let b = Mask::from_fn([5, 5, 1], [1.0; 3], |x, y, _| x == 3 && y == 4);
        let h = hausdorff(&a, &b, 100.0).unwrap().unwrap();
        assert_eq!(h.max, 5.0);
        assert_eq!(h.percentile, 5.0);
    }

    #[test]
    fn anisotropic_spacing() {
        let a = Mask::from_fn([4, 1, 3], [0.5, 1.0, 2.0], |x, _, z| x == 0 && z == 0);
        let b = Mask::from_fn([4, 1, 3], [0.5, 1.0, 2.0], |x, _, z| x == 3 && z == 2);
        let h = hausdorff(&a, &b, 100.0).unwrap().unwrap();
        assert!((h.max - (1.5f64 * 1.5 + 16.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn surface_of_a_cube() {
        let m = Mask::from_fn([5, 5, 5], [1.0; 3], |x, y, z| (1..4).contains(&x) && (1..4).contains(&y) && (1..4).contains(&z));
        assert_eq!(surface(&m).count(), 26);
        let full = Mask::from_fn([3, 3, 3], [1.0; 3], |_, _, _| true);
        assert_eq!(surface(&full).count(), 26);
    }

    #[test]
    fn empty_is_undefined() {
        let a = Mask::from_fn([2, 2, 2], [1.0; 3], |_, _, _| false);
        let b = Mask::from_fn([2, 2, 2], [1.0; 3], |x, _, _| x == 0);
        assert_eq!(hausdorff(&a, &b, 95.0).unwrap(), None);
        assert!(hausdorff(&b, &b, 0.0).is_err());
    }

    #[test]
    fn nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(xs.clone(), 95.0), 19.0);
        assert_eq!(percentile(xs.clone(), 100.0), 20.0);
        assert_eq!(percentile(xs, 1.0), 1.0);
    }
}
