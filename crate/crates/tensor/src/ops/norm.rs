//! Batch, reference-batch and virtual-batch normalization.
//!
//! All three share one normalization kernel so that reference normalization
//! against the batch itself reproduces plain batch normalization bit for bit.

use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Per-channel mean and (biased) variance of a reference batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats<T> {
    /// Number of examples the statistics were pooled over.
    pub examples: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn layout(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return shape_err(format!("{what}: expected [N,C,...], got {shape:?}"));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Two-pass mean/variance of the values of channel `c` over all examples.
fn channel_moments<T: Scalar>(x: &[T], n: usize, c: usize, inner: usize, ch: usize) -> (T, T) {
    let m = T::c((n * inner) as f64);
    let mut sum = T::zero();
    for i in 0..n {
        let base = (i * c + ch) * inner;
        sum = sum + x[base..base + inner].iter().copied().sum::<T>();
    }
    let mean = sum / m;
    let mut sq = T::zero();
    for i in 0..n {
        let base = (i * c + ch) * inner;
        sq = sq + x[base..base + inner].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    }
    (mean, sq / m)
}

impl<T: Scalar> ChannelStats<T> {
    pub fn from_slice(x: &[T], shape: &[usize]) -> Result<Self> {
        let (n, c, inner) = layout(shape, "channel statistics")?;
        if x.len() != n * c * inner {
            return shape_err("channel statistics: data length does not match shape");
        }
        let (mean, var) = (0..c).map(|ch| channel_moments(x, n, c, inner, ch)).unzip();
        Ok(ChannelStats { examples: n, mean, var })
    }

    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        Self::from_slice(t.data(), t.shape())
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// `y = γ·(x − μ_c)·istd_c + β` where `(μ, istd)` are indexed by `group(n, c)`.
fn normalize<T: Scalar>(
    x: &[T],
    (n, c, inner): (usize, usize, usize),
    mean: &[T],
    istd: &[T],
    per_example: bool,
    gamma: &[T],
    beta: &[T],
) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..n {
        for ch in 0..c {
            let s = if per_example { i * c + ch } else { ch };
            let (mu, is, ga, be) = (mean[s], istd[s], gamma[ch], beta[ch]);
            let base = (i * c + ch) * inner;
            out.extend(x[base..base + inner].iter().map(|&v| ga * ((v - mu) * is) + be));
        }
    }
    out
}

fn check_affine<T: Scalar>(gamma: &Var<'_, T>, beta: &Var<'_, T>, c: usize) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return shape_err(format!(
            "normalization affine parameters {:?}/{:?} for {c} channels",
            gamma.shape(),
            beta.shape()
        ));
    }
    Ok(())
}

/// Gradients of γ and β, and the normalized activations, given fixed stats.
fn affine_grads<T: Scalar>(
    x: &[T],
    g: &[T],
    (n, c, inner): (usize, usize, usize),
    mean: &[T],
    istd: &[T],
    per_example: bool,
) -> (Vec<T>, Vec<T>) {
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let s = if per_example { i * c + ch } else { ch };
            let base = (i * c + ch) * inner;
            for j in base..base + inner {
                gg[ch] = gg[ch] + g[j] * (x[j] - mean[s]) * istd[s];
                gb[ch] = gb[ch] + g[j];
            }
        }
    }
    (gg, gb)
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Normalizes each channel with statistics of the whole batch.
    pub fn batch_norm(self, gamma: Var<'t, T>, beta: Var<'t, T>, eps: f64) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let dims @ (n, c, inner) = layout(&shape, "batch_norm")?;
        check_affine(&gamma, &beta, c)?;
        if n * inner <= 1 {
            return Err(TensorError::DegenerateBatch);
        }
        let stats = self.with_value(|x| ChannelStats::from_slice(x, &shape))?;
        let istd: Vec<T> = stats.var.iter().map(|&v| T::one() / (v + T::c(eps)).sqrt()).collect();
        let mean = stats.mean;
        let out = {
            let x = self.tape.nodes_value(self.id);
            let ga = self.tape.nodes_value(gamma.id);
            let be = self.tape.nodes_value(beta.id);
            normalize(&x, dims, &mean, &istd, false, &ga, &be)
        };
        let (xid, gid) = (self.id, gamma.id);
        let m = T::c((n * inner) as f64);
        Ok(self.tape.push(
            shape,
            out,
            &[self.id, gamma.id, beta.id],
            Box::new(move |ctx, _, g| {
                let x = ctx.value(xid);
                let ga = ctx.value(gid);
                let gx = ctx.needs_grad(xid).then(|| {
                    let mut gx = vec![T::zero(); x.len()];
                    for ch in 0..c {
                        let (mu, is) = (mean[ch], istd[ch]);
                        let (mut s1, mut s2) = (T::zero(), T::zero());
                        for i in 0..n {
                            let base = (i * c + ch) * inner;
                            for j in base..base + inner {
                                let d = g[j] * ga[ch];
                                s1 = s1 + d;
                                s2 = s2 + d * (x[j] - mu) * is;
                            }
                        }
                        for i in 0..n {
                            let base = (i * c + ch) * inner;
                            for j in base..base + inner {
                                let xhat = (x[j] - mu) * is;
                                gx[j] = is * (g[j] * ga[ch] - s1 / m - xhat * s2 / m);
                            }
                        }
                    }
                    gx
                });
                let (gg, gb) = affine_grads(x, g, (n, c, inner), &mean, &istd, false);
                vec![gx, Some(gg), Some(gb)]
            }),
        ))
    }

    /// Normalizes with statistics of a fixed reference batch only; the input
    /// does not influence the normalization constants.
    pub fn reference_batch_norm(
        self,
        stats: &ChannelStats<T>,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        eps: f64,
    ) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let dims @ (_, c, _) = layout(&shape, "reference_batch_norm")?;
        check_affine(&gamma, &beta, c)?;
        if stats.channels() != c {
            return shape_err(format!("reference stats have {} channels, input {c}", stats.channels()));
        }
        let istd: Vec<T> = stats.var.iter().map(|&v| T::one() / (v + T::c(eps)).sqrt()).collect();
        let mean = stats.mean.clone();
        let out = {
            let x = self.tape.nodes_value(self.id);
            let ga = self.tape.nodes_value(gamma.id);
            let be = self.tape.nodes_value(beta.id);
            normalize(&x, dims, &mean, &istd, false, &ga, &be)
        };
        let (xid, gid) = (self.id, gamma.id);
        let inner = dims.2;
        Ok(self.tape.push(
            shape,
            out,
            &[self.id, gamma.id, beta.id],
            Box::new(move |ctx, _, g| {
                let x = ctx.value(xid);
                let ga = ctx.value(gid);
                let gx = ctx.needs_grad(xid).then(|| {
                    g.iter()
                        .enumerate()
                        .map(|(j, &gj)| {
                            let ch = (j / inner) % c;
                            gj * ga[ch] * istd[ch]
                        })
                        .collect()
                });
                let (gg, gb) = affine_grads(x, g, dims, &mean, &istd, false);
                vec![gx, Some(gg), Some(gb)]
            }),
        ))
    }

    /// Normalizes every example independently with statistics pooled over
    /// the reference batch plus that example, the example weighted `1/(R+1)`.
    /// The reference statistics are constants.
    pub fn virtual_batch_norm(
        self,
        stats: &ChannelStats<T>,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        eps: f64,
    ) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let dims @ (n, c, inner) = layout(&shape, "virtual_batch_norm")?;
        check_affine(&gamma, &beta, c)?;
        if stats.channels() != c {
            return shape_err(format!("reference stats have {} channels, input {c}", stats.channels()));
        }
        let r = T::c(stats.examples as f64);
        let a = T::one() / (r + T::one());
        let mut mean = Vec::with_capacity(n * c);
        let mut istd = Vec::with_capacity(n * c);
        self.with_value(|x| {
            for i in 0..n {
                let ex = &x[i * c * inner..(i + 1) * c * inner];
                for ch in 0..c {
                    let (mx, vx) = channel_moments(ex, 1, c, inner, ch);
                    let (mr, vr) = (stats.mean[ch], stats.var[ch]);
                    let mu = a * (r * mr + mx);
                    let var = a * (r * (vr + (mr - mu) * (mr - mu)) + vx + (mx - mu) * (mx - mu));
                    mean.push(mu);
                    istd.push(T::one() / (var + T::c(eps)).sqrt());
                }
            }
        });
        let out = {
            let x = self.tape.nodes_value(self.id);
            let ga = self.tape.nodes_value(gamma.id);
            let be = self.tape.nodes_value(beta.id);
            normalize(&x, dims, &mean, &istd, true, &ga, &be)
        };
        let (xid, gid) = (self.id, gamma.id);
        let scale = a / T::c(inner as f64);
        Ok(self.tape.push(
            shape,
            out,
            &[self.id, gamma.id, beta.id],
            Box::new(move |ctx, _, g| {
                let x = ctx.value(xid);
                let ga = ctx.value(gid);
                let gx = ctx.needs_grad(xid).then(|| {
                    let mut gx = vec![T::zero(); x.len()];
                    for i in 0..n {
                        for ch in 0..c {
                            let s = i * c + ch;
                            let (mu, is) = (mean[s], istd[s]);
                            let range = s * inner..(s + 1) * inner;
                            let (mut s1, mut s2) = (T::zero(), T::zero());
                            for j in range.clone() {
                                let d = g[j] * ga[ch];
                                s1 = s1 + d;
                                s2 = s2 + d * (x[j] - mu) * is;
                            }
                            for j in range {
                                let xhat = (x[j] - mu) * is;
                                gx[j] = is * (g[j] * ga[ch] - scale * s1 - scale * xhat * s2);
                            }
                        }
                    }
                    gx
                });
                let (gg, gb) = affine_grads(x, g, dims, &mean, &istd, true);
                vec![gx, Some(gg), Some(gb)]
            }),
        ))
    }
}

/// How the non-reference rows of a [`Var::reference_coupled_norm`] input are
/// normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoupledMode {
    /// Statistics over the reference rows plus the row itself.
    Virtual,
    /// Statistics over the reference rows only.
    Reference,
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Normalization of a stacked `[reference; batch]` input in one graph.
    ///
    /// The first `n_ref` rows are the reference batch and are normalized
    /// with their own batch statistics. The remaining rows are normalized as
    /// [`Var::virtual_batch_norm`] or [`Var::reference_batch_norm`] would,
    /// except that the reference statistics are functions of the reference
    /// rows, so gradients reach them.
    pub fn reference_coupled_norm(
        self,
        n_ref: usize,
        mode: CoupledMode,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        eps: f64,
    ) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let dims @ (n, c, inner) = layout(&shape, "reference_coupled_norm")?;
        check_affine(&gamma, &beta, c)?;
        if n_ref == 0 || n_ref > n {
            return shape_err(format!("reference_coupled_norm: {n_ref} reference rows in a batch of {n}"));
        }
        if n_ref * inner <= 1 {
            return Err(TensorError::DegenerateBatch);
        }
        let r = T::c(n_ref as f64);
        let a = T::one() / (r + T::one());
        let e = T::c(eps);
        let mut mean = Vec::with_capacity(n * c);
        let mut istd = Vec::with_capacity(n * c);
        let (ref_mean, ref_istd) = self.with_value(|x| {
            let (rm, rv): (Vec<T>, Vec<T>) = (0..c).map(|ch| channel_moments(&x[..n_ref * c * inner], n_ref, c, inner, ch)).unzip();
            let ri: Vec<T> = rv.iter().map(|&v| T::one() / (v + e).sqrt()).collect();
            for _ in 0..n_ref {
                mean.extend_from_slice(&rm);
                istd.extend_from_slice(&ri);
            }
            for i in n_ref..n {
                let ex = &x[i * c * inner..(i + 1) * c * inner];
                for ch in 0..c {
                    match mode {
                        CoupledMode::Reference => {
                            mean.push(rm[ch]);
                            istd.push(ri[ch]);
                        }
                        CoupledMode::Virtual => {
                            let (mx, vx) = channel_moments(ex, 1, c, inner, ch);
                            let mu = a * (r * rm[ch] + mx);
                            let d = rm[ch] - mu;
                            let var = a * (r * (rv[ch] + d * d) + vx + (mx - mu) * (mx - mu));
                            mean.push(mu);
                            istd.push(T::one() / (var + e).sqrt());
                        }
                    }
                }
            }
            (rm, ri)
        });
        let out = {
            let x = self.tape.nodes_value(self.id);
            let ga = self.tape.nodes_value(gamma.id);
            let be = self.tape.nodes_value(beta.id);
            normalize(&x, dims, &mean, &istd, true, &ga, &be)
        };
        let (xid, gid) = (self.id, gamma.id);
        let k0 = T::c((n_ref * inner) as f64);
        let kv = T::c(((n_ref + 1) * inner) as f64);
        Ok(self.tape.push(
            shape,
            out,
            &[self.id, gamma.id, beta.id],
            Box::new(move |ctx, _, g| {
                let x = ctx.value(xid);
                let ga = ctx.value(gid);
                let gx = ctx.needs_grad(xid).then(|| {
                    let mut gx = vec![T::zero(); x.len()];
                    for ch in 0..c {
                        let (mr, ir) = (ref_mean[ch], ref_istd[ch]);
                        let rows = |lo: usize, hi: usize| (lo..hi).map(move |i| (i * c + ch) * inner);
                        // sums over the reference rows' own outputs
                        let (mut s1, mut s2) = (T::zero(), T::zero());
                        for base in rows(0, n_ref) {
                            for j in base..base + inner {
                                let d = g[j] * ga[ch];
                                s1 = s1 + d;
                                s2 = s2 + d * (x[j] - mr) * ir;
                            }
                        }
                        // contributions of the other rows to the reference
                        // statistics: grad_ref[k] -= (ca + x_k * cb)
                        let (mut ca, mut cb) = (T::zero(), T::zero());
                        for i in n_ref..n {
                            let s = i * c + ch;
                            let (mu, is) = (mean[s], istd[s]);
                            let base = s * inner;
                            let (mut t1, mut t2) = (T::zero(), T::zero());
                            for j in base..base + inner {
                                let d = g[j] * ga[ch];
                                t1 = t1 + d;
                                t2 = t2 + d * (x[j] - mu) * is;
                            }
                            match mode {
                                CoupledMode::Reference => {
                                    for j in base..base + inner {
                                        gx[j] = is * g[j] * ga[ch];
                                    }
                                    s1 = s1 + t1;
                                    s2 = s2 + t2;
                                }
                                CoupledMode::Virtual => {
                                    for j in base..base + inner {
                                        let xhat = (x[j] - mu) * is;
                                        gx[j] = is * (g[j] * ga[ch] - t1 / kv - xhat * t2 / kv);
                                    }
                                    ca = ca + (is * t1 - is * is * t2 * mu) / kv;
                                    cb = cb + is * is * t2 / kv;
                                }
                            }
                        }
                        for base in rows(0, n_ref) {
                            for j in base..base + inner {
                                let rhat = (x[j] - mr) * ir;
                                gx[j] = ir * (g[j] * ga[ch] - s1 / k0 - rhat * s2 / k0) - ca - x[j] * cb;
                            }
                        }
                    }
                    gx
                });
                let (gg, gb) = affine_grads(x, g, dims, &mean, &istd, true);
                vec![gx, Some(gg), Some(gb)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn affine<'t>(tape: &'t Tape<f64>, c: usize, g: f64, b: f64) -> (Var<'t, f64>, Var<'t, f64>) {
        (tape.constant(&Tensor::full(&[c], g)), tape.constant(&Tensor::full(&[c], b)))
    }

    fn channel_mean_std(v: &[f64], n: usize, c: usize, inner: usize, ch: usize) -> (f64, f64) {
        let vals: Vec<f64> =
            (0..n).flat_map(|i| v[(i * c + ch) * inner..(i * c + ch + 1) * inner].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, var.sqrt())
    }

    #[test]
    fn batch_norm_moments_follow_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tape = Tape::<f64>::new();
        let x = tape.constant(&Tensor::randn(&[3, 2, 4, 4], 5.0, &mut rng));
        for (ga, be) in [(1.0, 0.0), (2.0, 3.0)] {
            let (g, b) = affine(&tape, 2, ga, be);
            let y = x.batch_norm(g, b, 1e-12).unwrap().value();
            for ch in 0..2 {
                let (m, s) = channel_mean_std(&y, 3, 2, 16, ch);
                assert!((m - be).abs() < 1e-5, "mean {m}");
                assert!((s - ga).abs() < 1e-5, "std {s}");
            }
        }
    }

    #[test]
    fn single_value_batch_is_degenerate() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(&Tensor::full(&[1, 2, 1, 1], 1.0));
        let (g, b) = affine(&tape, 2, 1.0, 0.0);
        assert!(matches!(x.batch_norm(g, b, 1e-5), Err(TensorError::DegenerateBatch)));
    }

    #[test]
    fn reference_norm_ignores_input_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tape = Tape::<f64>::new();
        let r = Tensor::<f64>::randn(&[4, 3, 2, 2], 1.0, &mut rng);
        let stats = ChannelStats::from_tensor(&r).unwrap();
        let (g, b) = affine(&tape, 3, 1.0, 0.0);
        let a = tape.constant(&Tensor::randn(&[2, 3, 2, 2], 1.0, &mut rng));
        let ya = a.reference_batch_norm(&stats, g, b, 1e-5).unwrap().value();
        let av = a.value();
        for (j, (&y, &x)) in ya.iter().zip(&av).enumerate() {
            let ch = (j / 4) % 3;
            let want = (x - stats.mean[ch]) / (stats.var[ch] + 1e-5).sqrt();
            assert!((y - want).abs() < 1e-12);
        }
    }

    #[test]
    fn vbn_at_reference_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Tensor::<f64>::randn(&[6, 2, 3, 3], 1.0, &mut rng);
        let stats = ChannelStats::from_tensor(&r).unwrap();
        let mut x = vec![0.0; 18];
        for ch in 0..2 {
            x[ch * 9..(ch + 1) * 9].fill(stats.mean[ch]);
        }
        let tape = Tape::<f64>::new();
        let (g, b) = affine(&tape, 2, 1.0, 0.0);
        let xv = tape.constant(&Tensor::new(&[1, 2, 3, 3], x).unwrap());
        let y = xv.virtual_batch_norm(&stats, g, b, 1e-5).unwrap().value();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    fn weighted_sum<'t>(y: Var<'t, f64>, seed: u64) -> Var<'t, f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Tensor::randn(&y.shape(), 1.0, &mut rng);
        y.mul(y.tape().constant(&w)).unwrap().sum()
    }

    #[test]
    fn coupled_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::<f64>::randn(&[5, 2, 3, 2], 1.5, &mut rng);
        for mode in [CoupledMode::Virtual, CoupledMode::Reference] {
            for n_ref in [1, 3, 5] {
                let rep = crate::grad_check(
                    |t, x| {
                        let g = t.constant(&Tensor::new(&[2], vec![1.3, 0.7]).unwrap());
                        let b = t.constant(&Tensor::new(&[2], vec![0.1, -0.2]).unwrap());
                        Ok(weighted_sum(x.reference_coupled_norm(n_ref, mode, g, b, 1e-5)?, 9))
                    },
                    &x,
                    1e-6,
                )
                .unwrap();
                assert!(rep.max_rel_error < 1e-5, "{mode:?} n_ref {n_ref}: {}", rep.max_rel_error);
            }
        }
    }

    #[test]
    fn coupled_norm_matches_constant_reference_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = Tensor::<f64>::randn(&[3, 2, 4, 4], 2.0, &mut rng);
        let x = Tensor::<f64>::randn(&[2, 2, 4, 4], 1.0, &mut rng);
        let stats = ChannelStats::from_tensor(&r).unwrap();
        let mut joint = r.data().to_vec();
        joint.extend_from_slice(x.data());
        let tape = Tape::<f64>::new();
        let (g, b) = affine(&tape, 2, 1.5, 0.25);
        let xv = tape.constant(&x);
        let jv = tape.constant(&Tensor::new(&[5, 2, 4, 4], joint).unwrap());
        let rows = 3 * 2 * 16;
        for (mode, want) in [
            (CoupledMode::Virtual, xv.virtual_batch_norm(&stats, g, b, 1e-5).unwrap().value()),
            (CoupledMode::Reference, xv.reference_batch_norm(&stats, g, b, 1e-5).unwrap().value()),
        ] {
            let got = jv.reference_coupled_norm(3, mode, g, b, 1e-5).unwrap().value();
            for (a, w) in got[rows..].iter().zip(&want) {
                assert!((a - w).abs() < 1e-12);
            }
            let bn = tape.constant(&r).batch_norm(g, b, 1e-5).unwrap().value();
            for (a, w) in got[..rows].iter().zip(&bn) {
                assert!((a - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coupled_norm_rejects_bad_reference_count() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(&Tensor::full(&[2, 1, 2, 2], 1.0));
        let (g, b) = affine(&tape, 1, 1.0, 0.0);
        assert!(x.reference_coupled_norm(0, CoupledMode::Virtual, g, b, 1e-5).is_err());
        assert!(x.reference_coupled_norm(3, CoupledMode::Virtual, g, b, 1e-5).is_err());
    }
}
