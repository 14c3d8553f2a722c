//! Finite-difference and adjoint checks for every differentiable operation.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorseg_tensor::{grad_check, ChannelStats, Tape, Tensor, Var};

const TOL: f64 = 1e-5;
const SEEDS: u64 = 25;
const EPS: f64 = 1e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values bounded away from zero so relu/leaky kinks are never straddled.
fn off_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Weighted sum so that every output coordinate carries a distinct gradient.
fn project<'t>(y: Var<'t, f64>, seed: u64) -> Var<'t, f64> {
    let mut r = rng(seed ^ 0xabcdef);
    let w = Tensor::randn(&y.shape(), 1.0, &mut r);
    let wv = y.tape().constant(&w);
    y.mul(wv).unwrap().sum()
}

#[test]
fn conv2d_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let stride = 1 + (seed % 2) as usize;
        let k = [1, 3, 5][(seed % 3) as usize];
        let pad = k / 2;
        let h = 4 + r.random_range(0..3) * stride;
        let x = Tensor::randn(&[2, 2, h + (h + 2 * pad - k) % stride, 5 + (5 + 2 * pad - k) % stride], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2, k, k], 0.5, &mut r);
        let rep = grad_check(|t, xv| Ok(project(xv.conv2d(t.constant(&w), stride, pad)?, seed)), &x, EPS).unwrap();
        assert!(rep.passes(TOL), "input seed {seed}: {rep:?}");
        let rep = grad_check(|t, wv| Ok(project(t.constant(&x).conv2d(wv, stride, pad)?, seed)), &w, EPS).unwrap();
        assert!(rep.passes(TOL), "weight seed {seed}: {rep:?}");
    }
}

#[test]
fn conv2d_example_input_1x2x5x5() {
    let mut r = rng(99);
    let x = Tensor::randn(&[1, 2, 5, 5], 1.0, &mut r);
    let w = Tensor::randn(&[2, 2, 3, 3], 1.0, &mut r);
    let rep = grad_check(|t, xv| Ok(xv.conv2d(t.constant(&w), 1, 1)?.tanh().sum()), &x, EPS).unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

#[test]
fn conv_transpose2d_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let (k, stride, pad) = [(2, 2, 0), (3, 1, 1), (3, 2, 1), (4, 2, 1)][(seed % 4) as usize];
        let x = Tensor::randn(&[2, 3, 3, 4], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2, k, k], 0.5, &mut r);
        let rep =
            grad_check(|t, xv| Ok(project(xv.conv_transpose2d(t.constant(&w), stride, pad)?, seed)), &x, EPS)
                .unwrap();
        assert!(rep.passes(TOL), "input seed {seed}: {rep:?}");
        let rep =
            grad_check(|t, wv| Ok(project(t.constant(&x).conv_transpose2d(wv, stride, pad)?, seed)), &w, EPS)
                .unwrap();
        assert!(rep.passes(TOL), "weight seed {seed}: {rep:?}");
    }
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn conv_adjoint_identity(seed in 0u64..10_000, k in 1usize..5, stride in 1usize..3, n in 1usize..3,
                             c in 1usize..4, f in 1usize..4, hi in 1usize..5, wi in 1usize..5) {
        let pad = if k > 2 { 1 } else { 0 };
        // conv input extent that maps exactly onto hi×wi
        let (h, w) = ((hi - 1) * stride + k - 2 * pad, (wi - 1) * stride + k - 2 * pad);
        prop_assume!(h > 0 && w > 0);
        let mut r = rng(seed);
        let x = Tensor::<f64>::randn(&[n, c, h, w], 1.0, &mut r);
        let wt = Tensor::<f64>::randn(&[f, c, k, k], 1.0, &mut r);
        let y = Tensor::<f64>::randn(&[n, f, hi, wi], 1.0, &mut r);
        let tape = Tape::new();
        let wv = tape.constant(&wt);
        let cx = tape.constant(&x).conv2d(wv, stride, pad).unwrap();
        let ty = tape.constant(&y).conv_transpose2d(wv, stride, pad).unwrap();
        prop_assert_eq!(cx.shape(), y.shape().to_vec());
        prop_assert_eq!(ty.shape(), x.shape().to_vec());
        let lhs = inner(&cx.value(), y.data());
        let rhs = inner(x.data(), &ty.value());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }
}

#[test]
fn activation_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let x = off_zero(&[3, 7], &mut r);
        for (name, op) in [
            ("relu", (|v: Var<'_, f64>| v.relu()) as fn(Var<'_, f64>) -> Var<'_, f64>),
            ("tanh", |v| v.tanh()),
            ("sigmoid", |v| v.sigmoid()),
            ("leaky", |v| v.leaky_relu(0.2)),
        ] {
            let rep = grad_check(|_, xv| Ok(project(op(xv), seed)), &x, EPS).unwrap();
            assert!(rep.passes(1e-6), "{name} seed {seed}: {rep:?}");
        }
    }
}

fn affine_case(seed: u64, c: usize) -> (Tensor<f64>, Tensor<f64>) {
    let mut r = rng(seed + 1000);
    (Tensor::uniform(&[c], 0.5, 2.0, &mut r), Tensor::randn(&[c], 1.0, &mut r))
}

#[test]
fn batch_norm_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let x = Tensor::randn(&[3, 2, 3, 3], 2.0, &mut r);
        let (g, b) = affine_case(seed, 2);
        let rep = grad_check(
            |t, xv| Ok(project(xv.batch_norm(t.constant(&g), t.constant(&b), 1e-5)?, seed)),
            &x,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "x seed {seed}: {rep:?}");
        let rep = grad_check(
            |t, gv| Ok(project(t.constant(&x).batch_norm(gv, t.constant(&b), 1e-5)?, seed)),
            &g,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "gamma seed {seed}: {rep:?}");
        let rep = grad_check(
            |t, bv| Ok(project(t.constant(&x).batch_norm(t.constant(&g), bv, 1e-5)?, seed)),
            &b,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "beta seed {seed}: {rep:?}");
    }
}

#[test]
fn virtual_batch_norm_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let reference = Tensor::<f64>::randn(&[1 + (seed % 4) as usize, 3, 2, 3], 1.5, &mut r);
        let stats = ChannelStats::from_tensor(&reference).unwrap();
        let x = Tensor::randn(&[2, 3, 2, 3], 1.0, &mut r);
        let (g, b) = affine_case(seed, 3);
        let rep = grad_check(
            |t, xv| Ok(project(xv.virtual_batch_norm(&stats, t.constant(&g), t.constant(&b), 1e-5)?, seed)),
            &x,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "x seed {seed}: {rep:?}");
        let rep = grad_check(
            |t, gv| Ok(project(t.constant(&x).virtual_batch_norm(&stats, gv, t.constant(&b), 1e-5)?, seed)),
            &g,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "gamma seed {seed}: {rep:?}");
    }
}

#[test]
fn reference_batch_norm_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let reference = Tensor::<f64>::randn(&[3, 2, 3, 3], 1.0, &mut r);
        let stats = ChannelStats::from_tensor(&reference).unwrap();
        let x = Tensor::randn(&[2, 2, 3, 3], 1.0, &mut r);
        let (g, b) = affine_case(seed, 2);
        let rep = grad_check(
            |t, xv| Ok(project(xv.reference_batch_norm(&stats, t.constant(&g), t.constant(&b), 1e-5)?, seed)),
            &x,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "x seed {seed}: {rep:?}");
        let rep = grad_check(
            |t, bv| Ok(project(t.constant(&x).reference_batch_norm(&stats, t.constant(&g), bv, 1e-5)?, seed)),
            &b,
            EPS,
        )
        .unwrap();
        assert!(rep.passes(TOL), "beta seed {seed}: {rep:?}");
    }
}

#[test]
fn loss_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let x = Tensor::randn(&[4, 5], 1.0, &mut r);
        let target = Tensor::randn(&[4, 5], 1.0, &mut r);
        let rep = grad_check(|t, xv| xv.mse(t.constant(&target)), &x, EPS).unwrap();
        assert!(rep.passes(1e-6), "mse seed {seed}: {rep:?}");
        let p = Tensor::uniform(&[4, 5], 0.05, 0.95, &mut r);
        let labels =
            Tensor::new(&[4, 5], (0..20).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect()).unwrap();
        let rep = grad_check(|t, pv| pv.bce(t.constant(&labels)), &p, EPS).unwrap();
        assert!(rep.passes(1e-6), "bce seed {seed}: {rep:?}");
        let off = Tensor::new(&[4, 5], x.data().iter().zip(target.data()).map(|(a, b)| b + (a - b).signum() * (0.1 + (a - b).abs())).collect()).unwrap();
        let rep = grad_check(|t, xv| xv.l1(t.constant(&target)), &off, EPS).unwrap();
        assert!(rep.passes(1e-6), "l1 seed {seed}: {rep:?}");
    }
}

#[test]
fn shape_op_gradients() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let x = Tensor::randn(&[2, 3, 4, 4], 1.0, &mut r);
        let other = Tensor::randn(&[2, 2, 4, 4], 1.0, &mut r);
        let bias = Tensor::randn(&[3], 1.0, &mut r);
        let rep = grad_check(|_, xv| Ok(project(xv.max_pool2d()?, seed)), &x, EPS).unwrap();
        assert!(rep.passes(TOL), "max_pool seed {seed}: {rep:?}");
        let rep = grad_check(|t, xv| Ok(project(xv.concat(t.constant(&other))?, seed)), &x, EPS).unwrap();
        assert!(rep.passes(TOL), "concat seed {seed}: {rep:?}");
        let rep = grad_check(|t, bv| Ok(project(t.constant(&x).add_channel_bias(bv)?, seed)), &bias, EPS).unwrap();
        assert!(rep.passes(TOL), "bias seed {seed}: {rep:?}");
        let rep = grad_check(|_, xv| Ok(project(xv.global_avg_pool()?, seed)), &x, EPS).unwrap();
        assert!(rep.passes(TOL), "gap seed {seed}: {rep:?}");
        let feats = Tensor::randn(&[3, 5], 1.0, &mut r);
        let w = Tensor::randn(&[4, 5], 1.0, &mut r);
        let b = Tensor::randn(&[4], 1.0, &mut r);
        let rep = grad_check(|t, wv| Ok(project(t.constant(&feats).linear(wv, t.constant(&b))?, seed)), &w, EPS)
            .unwrap();
        assert!(rep.passes(TOL), "linear seed {seed}: {rep:?}");
        let rep = grad_check(|t, fv| Ok(project(fv.linear(t.constant(&w), t.constant(&b))?, seed)), &feats, EPS)
            .unwrap();
        assert!(rep.passes(TOL), "linear input seed {seed}: {rep:?}");
    }
}

#[test]
fn backward_of_sum_is_ones() {
    let tape = Tape::<f64>::new();
    let x = tape.param(&Tensor::new(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
    let g = tape.backward(x.sum()).unwrap();
    assert_eq!(g.get(x).unwrap(), &[1.0; 4]);
}

#[test]
fn backward_matches_closed_form_least_squares() {
    // loss = mean((w·x - y)²) over n samples; dL/dw = 2/n Σ (w·x_i - y_i) x_i
    let xs = [0.5, -1.0, 2.0, 3.0];
    let ys = [1.0, 0.0, -1.0, 2.5];
    let w0 = 0.8;
    let tape = Tape::<f64>::new();
    let w = tape.param(&Tensor::new(&[1, 1], vec![w0]).unwrap());
    let x = tape.constant(&Tensor::new(&[4, 1], xs.to_vec()).unwrap());
    let zero = tape.constant(&Tensor::zeros(&[1]));
    let y = tape.constant(&Tensor::new(&[4, 1], ys.to_vec()).unwrap());
    let loss = x.linear(w, zero).unwrap().mse(y).unwrap();
    let g = tape.backward(loss).unwrap().get(w).unwrap()[0];
    let want: f64 = xs.iter().zip(&ys).map(|(x, y)| 2.0 / 4.0 * (w0 * x - y) * x).sum();
    assert!((g - want).abs() < 1e-14, "{g} vs {want}");
}

#[test]
fn reused_node_accumulates_both_paths() {
    let tape = Tape::<f64>::new();
    let x = tape.param(&Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
    let y = x.scale(2.0);
    let loss = y.add(y).unwrap().sum();
    assert_eq!(tape.backward(loss).unwrap().get(x).unwrap(), &[4.0; 3]);
    // two sweeps accumulate into the tensor
    let mut t = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap().with_grad();
    let g = tape.backward(loss).unwrap();
    g.accumulate_into(x, &mut t).unwrap();
    g.accumulate_into(x, &mut t).unwrap();
    assert_eq!(t.grad.unwrap(), vec![8.0; 3]);
}

#[test]
fn backward_rejects_non_scalar() {
    let tape = Tape::<f64>::new();
    let x = tape.param(&Tensor::zeros(&[2]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn grad_check_exact_for_linear_functions() {
    let mut r = rng(7);
    let x = Tensor::randn(&[10], 1.0, &mut r);
    let w = Tensor::randn(&[10], 1.0, &mut r);
    // central differences are exact on linear functions; a wide step keeps
    // cancellation error out of the comparison
    let rep = grad_check(|t, xv| Ok(xv.mul(t.constant(&w))?.sum().scale(3.0)), &x, 1e-2).unwrap();
    assert!(rep.max_rel_error < 1e-10, "{rep:?}");
}

#[test]
fn grad_check_composed_network() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let x = Tensor::randn(&[2, 2, 6, 6], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2, 3, 3], 0.5, &mut r);
        let labels = Tensor::new(&[2, 3, 6, 6], (0..216).map(|i| (i % 2) as f64).collect()).unwrap();
        let rep = grad_check(
            |t, wv| t.constant(&x).conv2d(wv, 1, 1)?.relu().sigmoid().bce(t.constant(&labels)),
            &w,
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "seed {seed}: {rep:?}");
    }
}

#[test]
fn grad_check_detects_corrupted_backward() {
    // x ⊙ detach(x) records only one of the two product-rule paths.
    let mut r = rng(8);
    let x = Tensor::randn(&[6], 1.0, &mut r);
    let rep = grad_check(|_, xv| Ok(xv.mul(xv.detach())?.sum()), &x, 1e-6).unwrap();
    assert!(rep.max_rel_error > 1e-2, "{rep:?}");
}
