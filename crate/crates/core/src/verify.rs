//! Finite-difference verification of every differentiable operation and of
//! the three networks, in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorseg_tensor::{grad_check, grad_check_sampled, ChannelStats, CoupledMode, GradCheckReport, ParamSet, Tape, Tensor, Var};

use crate::error::Result;
use crate::nn::{stack_rows, NormPass};
use crate::segnet::{DiscriminatorConfig, GeneratorConfig};
use crate::survival::SurvivalNetConfig;

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_EPS: f64 = 1e-6;
/// Coordinates compared per network parameter vector and seed.
pub const NETWORK_COORDS: usize = 64;

/// Worst relative error of one check over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub seeds: u64,
    pub worst: f64,
    pub worst_seed: u64,
}

impl CheckOutcome {
    pub fn passes(&self) -> bool {
        self.worst < GRADCHECK_TOL
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weighted sum so that every output coordinate carries a distinct gradient.
fn project<'t>(y: Var<'t, f64>, seed: u64) -> Var<'t, f64> {
    let w = Tensor::randn(&y.shape(), 1.0, &mut rng(seed ^ 0xabcdef));
    y.mul(y.tape().constant(&w)).expect("same shape").sum()
}

/// Values with magnitude in [0.05, 1.5], so kinks at zero are never straddled.
fn off_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(0.05..1.5) * if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Tensor::new(shape, data).expect("consistent shape")
}

struct Collector {
    seeds: u64,
    out: Vec<CheckOutcome>,
}

impl Collector {
    fn run(&mut self, name: &str, mut check: impl FnMut(u64) -> Result<GradCheckReport>) -> Result<()> {
        let mut o = CheckOutcome { name: name.to_string(), seeds: self.seeds, worst: 0.0, worst_seed: 0 };
        for seed in 0..self.seeds {
            let e = check(seed)?.max_rel_error;
            // NaN must count as a failure
            if !(e <= o.worst) {
                o.worst = e;
                o.worst_seed = seed;
            }
        }
        self.out.push(o);
        Ok(())
    }
}

/// Per-operation checks over `seeds` seeds.
pub fn op_checks(seeds: u64) -> Result<Vec<CheckOutcome>> {
    let mut c = Collector { seeds, out: Vec::new() };
    let eps = GRADCHECK_EPS;
    c.run("conv2d", |s| {
        let mut r = rng(s);
        let (k, stride, pad, h) = [(1, 1, 0, 5), (3, 1, 1, 5), (3, 2, 1, 5), (4, 2, 1, 6), (5, 1, 2, 5)][(s % 5) as usize];
        let x = Tensor::randn(&[2, 2, h, h + stride], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2, k, k], 0.5, &mut r);
        let a = grad_check(|t, v| Ok(project(v.conv2d(t.constant(&w), stride, pad)?, s)), &x, eps)?;
        let b = grad_check(|t, v| Ok(project(t.constant(&x).conv2d(v, stride, pad)?, s)), &w, eps)?;
        Ok(worse(a, b))
    })?;
    c.run("conv_transpose2d", |s| {
        let mut r = rng(s);
        let (k, stride, pad) = [(2, 2, 0), (3, 1, 1), (4, 2, 1)][(s % 3) as usize];
        let x = Tensor::randn(&[2, 3, 3, 4], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2, k, k], 0.5, &mut r);
        let a = grad_check(|t, v| Ok(project(v.conv_transpose2d(t.constant(&w), stride, pad)?, s)), &x, eps)?;
        let b = grad_check(|t, v| Ok(project(t.constant(&x).conv_transpose2d(v, stride, pad)?, s)), &w, eps)?;
        Ok(worse(a, b))
    })?;
    type Act = for<'t> fn(Var<'t, f64>) -> Var<'t, f64>;
    let acts: [(&str, Act); 4] = [
        ("relu", |v| v.relu()),
        ("leaky_relu", |v| v.leaky_relu(0.2)),
        ("tanh", |v| v.tanh()),
        ("sigmoid", |v| v.sigmoid()),
    ];
    for (name, f) in acts {
        c.run(name, |s| {
            let x = off_zero(&[3, 7], &mut rng(s));
            Ok(grad_check(|_, v| Ok(project(f(v), s)), &x, eps)?)
        })?;
    }
    let affine = |s: u64, ch: usize| {
        let mut r = rng(s + 1000);
        (Tensor::<f64>::uniform(&[ch], 0.5, 1.5, &mut r), Tensor::<f64>::randn(&[ch], 0.5, &mut r))
    };
    c.run("batch_norm", |s| {
        let x = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng(s));
        let (g, b) = affine(s, 2);
        let a = grad_check(|t, v| Ok(project(v.batch_norm(t.constant(&g), t.constant(&b), 1e-5)?, s)), &x, eps)?;
        let bg = grad_check(|t, v| Ok(project(t.constant(&x).batch_norm(v, t.constant(&b), 1e-5)?, s)), &g, eps)?;
        let bb = grad_check(|t, v| Ok(project(t.constant(&x).batch_norm(t.constant(&g), v, 1e-5)?, s)), &b, eps)?;
        Ok(worse(worse(a, bg), bb))
    })?;
    c.run("reference_batch_norm", |s| {
        let mut r = rng(s);
        let stats = ChannelStats::from_tensor(&Tensor::<f64>::randn(&[3, 2, 3, 3], 1.0, &mut r))?;
        let x = Tensor::randn(&[2, 2, 3, 3], 1.0, &mut r);
        let (g, b) = affine(s, 2);
        let a = grad_check(|t, v| Ok(project(v.reference_batch_norm(&stats, t.constant(&g), t.constant(&b), 1e-5)?, s)), &x, eps)?;
        let bg = grad_check(|t, v| Ok(project(t.constant(&x).reference_batch_norm(&stats, v, t.constant(&b), 1e-5)?, s)), &g, eps)?;
        Ok(worse(a, bg))
    })?;
    c.run("virtual_batch_norm", |s| {
        let mut r = rng(s);
        let stats = ChannelStats::from_tensor(&Tensor::<f64>::randn(&[1 + (s % 4) as usize, 3, 2, 3], 1.5, &mut r))?;
        let x = Tensor::randn(&[2, 3, 2, 3], 1.0, &mut r);
        let (g, b) = affine(s, 3);
        let a = grad_check(|t, v| Ok(project(v.virtual_batch_norm(&stats, t.constant(&g), t.constant(&b), 1e-5)?, s)), &x, eps)?;
        let bg = grad_check(|t, v| Ok(project(t.constant(&x).virtual_batch_norm(&stats, v, t.constant(&b), 1e-5)?, s)), &g, eps)?;
        Ok(worse(a, bg))
    })?;
    c.run("reference_coupled_norm", |s| {
        let mut r = rng(s);
        let n_ref = 1 + (s % 3) as usize;
        let x = Tensor::randn(&[n_ref + 2, 2, 2, 3], 1.5, &mut r);
        let (g, b) = affine(s, 2);
        let mut worst: Option<GradCheckReport> = None;
        for mode in [CoupledMode::Virtual, CoupledMode::Reference] {
            let a = grad_check(
                |t, v| Ok(project(v.reference_coupled_norm(n_ref, mode, t.constant(&g), t.constant(&b), 1e-5)?, s)),
                &x,
                eps,
            )?;
            let bg = grad_check(
                |t, v| Ok(project(t.constant(&x).reference_coupled_norm(n_ref, mode, v, t.constant(&b), 1e-5)?, s)),
                &g,
                eps,
            )?;
            let w = worse(a, bg);
            worst = Some(match worst {
                Some(o) => worse(o, w),
                None => w,
            });
        }
        Ok(worst.expect("two modes"))
    })?;
    c.run("mse", |s| {
        let mut r = rng(s);
        let (x, y) = (Tensor::randn(&[4, 5], 1.0, &mut r), Tensor::randn(&[4, 5], 1.0, &mut r));
        Ok(grad_check(|t, v| v.mse(t.constant(&y)), &x, eps)?)
    })?;
    c.run("bce", |s| {
        let mut r = rng(s);
        let p = Tensor::uniform(&[4, 5], 0.05, 0.95, &mut r);
        let y = Tensor::new(&[4, 5], (0..20).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect())?;
        Ok(grad_check(|t, v| v.bce(t.constant(&y)), &p, eps)?)
    })?;
    c.run("l1", |s| {
        let mut r = rng(s);
        let y = Tensor::randn(&[4, 5], 1.0, &mut r);
        let d = off_zero(&[4, 5], &mut r);
        let x = Tensor::new(&[4, 5], y.data().iter().zip(d.data()).map(|(a, b)| a + b).collect())?;
        Ok(grad_check(|t, v| v.l1(t.constant(&y)), &x, eps)?)
    })?;
    c.run("linear", |s| {
        let mut r = rng(s);
        let (x, w, b) = (Tensor::randn(&[3, 5], 1.0, &mut r), Tensor::randn(&[4, 5], 1.0, &mut r), Tensor::randn(&[4], 1.0, &mut r));
        let a = grad_check(|t, v| Ok(project(v.linear(t.constant(&w), t.constant(&b))?, s)), &x, eps)?;
        let bw = grad_check(|t, v| Ok(project(t.constant(&x).linear(v, t.constant(&b))?, s)), &w, eps)?;
        Ok(worse(a, bw))
    })?;
    c.run("pool_concat_bias", |s| {
        let mut r = rng(s);
        let x = Tensor::randn(&[2, 3, 4, 4], 1.0, &mut r);
        let other = Tensor::randn(&[2, 2, 4, 4], 1.0, &mut r);
        let bias = Tensor::randn(&[3], 1.0, &mut r);
        let a = grad_check(|_, v| Ok(project(v.max_pool2d()?, s)), &x, eps)?;
        let b = grad_check(|_, v| Ok(project(v.global_avg_pool()?, s)), &x, eps)?;
        let cc = grad_check(|t, v| Ok(project(v.concat(t.constant(&other))?, s)), &x, eps)?;
        let d = grad_check(|t, v| Ok(project(t.constant(&x).add_channel_bias(v)?, s)), &bias, eps)?;
        Ok(worse(worse(a, b), worse(cc, d)))
    })?;
    Ok(c.out)
}

fn worse(a: GradCheckReport, b: GradCheckReport) -> GradCheckReport {
    if b.max_rel_error > a.max_rel_error || b.max_rel_error.is_nan() {
        b
    } else {
        a
    }
}

/// Gradient of a whole network's loss with respect to its flattened
/// parameters, sampled at [`NETWORK_COORDS`] coordinates.
fn check_params<F>(params: &ParamSet<f64>, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> tumorseg_tensor::Result<Var<'t, f64>>,
{
    let flat = Tensor::new(&[params.numel()], params.flatten())?;
    Ok(grad_check_sampled(f, &flat, GRADCHECK_EPS, NETWORK_COORDS, seed)?)
}

/// Small generator, discriminator and survival network on their training
/// path: a reference batch stacked in front of the input, with gradients
/// through its normalization statistics.
pub fn network_checks(seeds: u64) -> Result<Vec<CheckOutcome>> {
    let mut c = Collector { seeds, out: Vec::new() };
    let g_cfg = GeneratorConfig { depth: 1, base_channels: 2 };
    c.run("generator", |s| {
        let mut r = rng(s);
        let p: ParamSet<f64> = g_cfg.init_params(&mut r);
        let reference = Tensor::randn(&[2, 4, 4, 4], 1.0, &mut r);
        let x = Tensor::randn(&[2, 4, 4, 4], 1.0, &mut r);
        let joint = stack_rows(&[&reference, &x])?;
        check_params(&p, s, |t, flat| {
            let bp = p.bind_flat(flat)?;
            Ok(project(g_cfg.forward(&bp, t.constant(&joint), &mut NormPass::coupled(2))?, s))
        })
    })?;
    let d_cfg = DiscriminatorConfig { layers: 2, base_channels: 2 };
    c.run("discriminator", |s| {
        let mut r = rng(s);
        let p: ParamSet<f64> = d_cfg.init_params(&mut r);
        let (rx, ry) = (Tensor::randn(&[2, 4, 8, 8], 1.0, &mut r), Tensor::uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut r));
        let x = Tensor::randn(&[2, 4, 8, 8], 1.0, &mut r);
        let y = Tensor::uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut r);
        let (jx, jy) = (stack_rows(&[&rx, &x])?, stack_rows(&[&ry, &y])?);
        let labels = Tensor::new(&[2, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])?;
        check_params(&p, s, |t, flat| {
            let bp = p.bind_flat(flat)?;
            d_cfg.forward(&bp, t.constant(&jx), t.constant(&jy), &mut NormPass::coupled(2))?.bce(t.constant(&labels))
        })
    })?;
    let s_cfg = SurvivalNetConfig { blocks: 1, base_channels: 2, clinical_hidden: 2, fc_hidden: 3 };
    c.run("survival_net", |s| {
        let mut r = rng(s);
        let p: ParamSet<f64> = s_cfg.init_params(&mut r);
        let reference = Tensor::randn(&[2, 7, 4, 4], 1.0, &mut r);
        let x = Tensor::randn(&[2, 7, 4, 4], 1.0, &mut r);
        let joint = stack_rows(&[&reference, &x])?;
        let age = Tensor::uniform(&[2, 1], 0.1, 0.9, &mut r);
        let target = Tensor::uniform(&[2, 1], 0.0, 1.0, &mut r);
        check_params(&p, s, |t, flat| {
            let bp = p.bind_flat(flat)?;
            s_cfg.forward(&bp, t.constant(&joint), t.constant(&age), &mut NormPass::coupled(2))?.mse(t.constant(&target))
        })
    })?;
    Ok(c.out)
}

/// Operations, then networks.
pub fn gradient_suite(seeds: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = op_checks(seeds)?;
    out.extend(network_checks(seeds)?);
    Ok(out)
}
