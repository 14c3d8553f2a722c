//! Central-difference verification of recorded backward passes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over the checked coordinates.
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

fn evaluate<F>(f: &F, x: &Tensor<f64>) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let xv = tape.constant(x);
    let y = f(&tape, xv)?;
    if y.numel() != 1 {
        return shape_err(format!("grad_check needs a scalar function, got {:?}", y.shape()));
    }
    Ok(y.item())
}

/// Compares the recorded gradient of scalar `f` at `x` against central
/// differences with step `eps`, over every coordinate.
///
/// The relative error of a coordinate is `|a - n| / max(|a|, |n|, floor)`,
/// where `floor` is `1e-3` times the largest gradient magnitude seen, so that
/// coordinates with negligible gradient are judged against the gradient's
/// overall scale rather than against zero.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    check_coords(&f, x, eps, &all)
}

/// Like [`grad_check`] but compares at most `max_coords` coordinates chosen
/// uniformly by `seed`.
pub fn grad_check_sampled<F>(f: F, x: &Tensor<f64>, eps: f64, max_coords: usize, seed: u64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let coords = if max_coords >= x.len() {
        (0..x.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, x.len(), max_coords).into_vec();
        c.sort_unstable();
        c
    };
    check_coords(&f, x, eps, &coords)
}

fn check_coords<F>(f: &F, x: &Tensor<f64>, eps: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let analytic = {
        let tape = Tape::new();
        let xv = tape.param(x);
        let y = f(&tape, xv)?;
        tape.backward(y)?.get_or_zeros(xv)
    };
    let mut numeric = Vec::with_capacity(coords.len());
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = evaluate(f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = evaluate(f, &probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * eps));
    }
    let scale = coords
        .iter()
        .zip(&numeric)
        .map(|(&i, n)| analytic[i].abs().max(n.abs()))
        .fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(1e-12);
    let mut report =
        GradCheckReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, checked: coords.len() };
    for (&i, &n) in coords.iter().zip(&numeric) {
        let a = analytic[i];
        let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if err > report.max_rel_error || (report.max_rel_error == 0.0 && i == coords[0]) {
            report = GradCheckReport { max_rel_error: err, worst_index: i, analytic: a, numeric: n, ..report };
        }
    }
    Ok(report)
}
