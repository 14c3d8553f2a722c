//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always printed.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorseg::metrics::{aggregate, confusion, evaluate_case, hausdorff, region_masks, Mask, Region};
use tumorseg::preprocess::{
    build_reference_histogram, correct_bias, fit_bias, histogram_match, PreprocessConfig, Preprocessor, DEFAULT_BINS,
};
use tumorseg::segnet::{segment_case, DiscriminatorConfig, GeneratorConfig, SegDataset, SegTrainConfig, Trainer};
use tumorseg::survival::{
    accuracy, scale_age, scale_survival, train_survival, unscale_survival, SlicePolicy, SplitSpec, SurvivalSample,
    SurvivalTrainConfig,
};
use tumorseg::tensor::{ChannelStats, Tape, Tensor};
use tumorseg::testkit::{generate_case, generate_dataset, DatasetSpec, PhantomSpec};
use tumorseg::verify::{gradient_suite, GRADCHECK_TOL};
use tumorseg::volume::{
    assemble_volume, extract_slices, extract_volume_slices, read_nifti, read_raw, write_nifti, write_raw, Axis, Modality,
    PatientCase, RawDtype, Volume, VolumeKind,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let checks = gradient_suite(25).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let worst = checks.iter().max_by(|a, b| a.worst.total_cmp(&b.worst)).expect("non-empty suite");
    let failed: Vec<_> = checks.iter().filter(|c| !c.passes()).map(|c| format!("{} {:.2e}", c.name, c.worst)).collect();
    ensure(failed.is_empty(), || format!("over {GRADCHECK_TOL:e}: {failed:?}"))?;
    ensure(took < Duration::from_secs(300), || format!("took {}", secs(took)))?;
    Ok(format!("{} checks x 25 seeds, worst {} {:.2e}, {}", checks.len(), worst.name, worst.worst, secs(took)))
}

fn c2_adjoint() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0f64;
    let trials = 300;
    for _ in 0..trials {
        let k = r.random_range(1..6usize);
        let stride = r.random_range(1..4usize);
        let pad = r.random_range(0..=k / 2);
        let (n, c, f) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let (ho, wo) = (r.random_range(1..6usize), r.random_range(1..6usize));
        let (h, w) = ((ho - 1) * stride + k, (wo - 1) * stride + k);
        if h <= 2 * pad || w <= 2 * pad {
            continue;
        }
        let (h, w) = (h - 2 * pad, w - 2 * pad);
        let x = Tensor::<f64>::randn(&[n, c, h, w], 1.0, &mut r);
        let wt = Tensor::<f64>::randn(&[f, c, k, k], 1.0, &mut r);
        let y = Tensor::<f64>::randn(&[n, f, ho, wo], 1.0, &mut r);
        let tape = Tape::new();
        let wv = tape.constant(&wt);
        let ax = tape.constant(&x).conv2d(wv, stride, pad).map_err(|e| e.to_string())?.value();
        let aty = tape.constant(&y).conv_transpose2d(wv, stride, pad).map_err(|e| e.to_string())?.value();
        let lhs: f64 = ax.iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.iter()).map(|(a, b)| a * b).sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    ensure(worst <= 1e-10, || format!("<Ax,y> - <x,A'y> reached {worst:.2e}"))?;
    Ok(format!("{trials} random shapes, worst relative gap {worst:.1e}"))
}

/// Surface voxels by explicit neighbour lookup.
fn brute_surface(m: &Mask) -> Vec<[i64; 3]> {
    let d = m.dims().map(|x| x as i64);
    let inside = |p: [i64; 3]| (0..3).all(|a| p[a] >= 0 && p[a] < d[a]) && m.get(p[0] as usize, p[1] as usize, p[2] as usize);
    let mut out = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let p = [x, y, z];
                if !inside(p) {
                    continue;
                }
                let steps = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
                if steps.iter().any(|s| !inside([x + s[0], y + s[1], z + s[2]])) {
                    out.push(p);
                }
            }
        }
    }
    out
}

fn brute_directed(from: &[[i64; 3]], to: &[[i64; 3]], sp: [f64; 3]) -> Vec<f64> {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| {
                    let q: [f64; 3] = std::array::from_fn(|k| ((a[k] - b[k]) as f64 * sp[k]).powi(2));
                    q[0] + q[1] + q[2]
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

fn nearest_rank(mut xs: Vec<f64>, q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * xs.len() as f64).ceil() as usize;
    xs[rank.clamp(1, xs.len()) - 1]
}

fn c3_metrics() -> Outcome {
    let mut r = rng(3);
    let trials = 120;
    for t in 0..trials {
        let sp = if t % 2 == 0 { [1.0f32; 3] } else { [0.5, 1.0, 2.0] };
        // sweep densities so empty, sparse and full masks all occur
        let dens = [0.0, 0.02, 0.3, 0.5, 0.9, 1.0];
        let (dp, dt) = (dens[r.random_range(0..dens.len())], dens[r.random_range(0..dens.len())]);
        let pred = Mask::from_fn([8; 3], sp, |_, _, _| r.random_bool(dp));
        let truth = Mask::from_fn([8; 3], sp, |_, _, _| r.random_bool(dt));
        let idx = |m: &Mask| -> HashSet<usize> { (0..m.len()).filter(|&i| m.data()[i]).collect() };
        let (p, tr) = (idx(&pred), idx(&truth));
        let inter = p.intersection(&tr).count();
        let c = confusion(&pred, &truth).map_err(|e| e.to_string())?;
        let all = 512;
        let neg_truth = all - tr.len();
        let tn = all - p.union(&tr).count();
        let dice = if p.len() + tr.len() == 0 { 1.0 } else { 2.0 * inter as f64 / (p.len() + tr.len()) as f64 };
        ensure(c.dice().value == dice, || format!("trial {t}: dice {} vs {dice}", c.dice().value))?;
        let sens = (!tr.is_empty()).then(|| inter as f64 / tr.len() as f64);
        ensure(c.sensitivity() == sens, || format!("trial {t}: sensitivity {:?} vs {sens:?}", c.sensitivity()))?;
        let spec = (neg_truth > 0).then(|| tn as f64 / neg_truth as f64);
        ensure(c.specificity() == spec, || format!("trial {t}: specificity {:?} vs {spec:?}", c.specificity()))?;

        let spd = sp.map(f64::from);
        let (sp_p, sp_t) = (brute_surface(&pred), brute_surface(&truth));
        let h = hausdorff(&pred, &truth, 95.0).map_err(|e| e.to_string())?;
        match h {
            None => ensure(sp_p.is_empty() || sp_t.is_empty(), || format!("trial {t}: Hausdorff undefined on non-empty masks"))?,
            Some(h) => {
                let (a, b) = (brute_directed(&sp_p, &sp_t, spd), brute_directed(&sp_t, &sp_p, spd));
                let max = a.iter().chain(&b).fold(0.0f64, |m, &x| m.max(x));
                let p95 = nearest_rank(a, 95.0).max(nearest_rank(b, 95.0));
                ensure(h.max == max && h.percentile == p95, || {
                    format!("trial {t}: Hausdorff ({}, {}) vs brute force ({max}, {p95})", h.max, h.percentile)
                })?;
            }
        }
    }

    // every label at every position of a 5x5x5 grid
    let labels = Volume::from_fn([5; 3], [1.0; 3], VolumeKind::Label, |x, y, z| ((x + 2 * y + 3 * z) % 5) as f32)
        .map_err(|e| e.to_string())?;
    let sets = region_masks(&labels).map_err(|e| e.to_string())?;
    let expect: [(Region, &[u8]); 3] = [(Region::Wt, &[1, 2, 3, 4]), (Region::Ct, &[1, 3, 4]), (Region::Et, &[4])];
    for (region, set) in expect {
        for (i, &l) in labels.data().iter().enumerate() {
            ensure(sets.get(region).data()[i] == set.contains(&(l as u8)), || format!("{region} wrong for label {l}"))?;
        }
    }
    Ok(format!("{trials} random 8^3 mask pairs match brute force exactly; WT/CT/ET label sets verified"))
}

/// Phantom without noise or bias, for measuring the residual field.
fn clean_phantom(seed: u64, side: usize) -> PatientCase {
    let mut s = PhantomSpec::new(format!("bias{seed}"), seed);
    let k = side as f64 / 64.0;
    s.dims = [side; 3];
    s.center = [(side as f64 - 1.0) / 2.0 + 3.0 * k; 3];
    s.r_wt = 13.0 * k;
    s.r_ct = 8.0 * k;
    s.r_et = 4.0 * k;
    s.noise_sigma = 0.0;
    generate_case(&s).expect("valid phantom")
}

fn c4_preprocess() -> Outcome {
    let mut r = rng(4);
    let mut worst_rms = 0f64;
    let mut tested = 0;
    for seed in 0..6 {
        let clean = clean_phantom(seed, 48);
        let dims = clean.dims();
        let order = 1 + (seed as usize % 2);
        let mut terms: Vec<([usize; 3], f64)> = Vec::new();
        for a in 0..=order {
            for b in 0..=order - a {
                for c in 0..=order - a - b {
                    if a + b + c > 0 {
                        terms.push(([a, b, c], r.random_range(-0.3..=0.3)));
                    }
                }
            }
        }
        let coord = |i: usize, n: usize| 2.0 * i as f64 / (n - 1) as f64 - 1.0;
        for m in Modality::ALL {
            let v = clean.modality(m);
            let biased = Volume::from_fn(dims, v.spacing(), VolumeKind::Intensity, |x, y, z| {
                let p = [coord(x, dims[0]), coord(y, dims[1]), coord(z, dims[2])];
                let f: f64 = terms.iter().map(|(e, c)| c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32)).sum();
                (v.get(x, y, z) as f64 * f.exp()) as f32
            })
            .map_err(|e| e.to_string())?;
            let model = fit_bias(&biased, 2, 0.0).map_err(|e| e.to_string())?;
            let fixed = correct_bias(&biased, &model).map_err(|e| e.to_string())?;
            let ratios: Vec<f64> =
                fixed.data().iter().zip(v.data()).filter(|(_, &c)| c > 0.0).map(|(&f, &c)| f as f64 / c as f64).collect();
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let rms = (ratios.iter().map(|q| (q / mean - 1.0).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
            worst_rms = worst_rms.max(rms);
            tested += 1;
        }
    }
    ensure(worst_rms <= 0.01, || format!("bias residual RMS {:.3}% over 1%", 100.0 * worst_rms))?;

    let cases = generate_dataset(10, 40, &DatasetSpec::cube(48)).map_err(|e| e.to_string())?;
    let bins = DEFAULT_BINS;
    let mut worst_ks = 0f64;
    let mut matched = 0;
    for m in Modality::ALL {
        let train: Vec<&Volume> = cases[..5].iter().map(|c| c.modality(m)).collect();
        let reference = build_reference_histogram(&train, bins, 0.0).map_err(|e| e.to_string())?;
        let edges = reference.bin_edges();
        for c in &cases {
            let v = c.modality(m);
            let out = histogram_match(v, &reference, 0.0).map_err(|e| e.to_string())?.volume;
            let mut pairs: Vec<(f32, f32)> =
                v.data().iter().zip(out.data()).filter(|(&x, _)| x > 0.0).map(|(&x, &y)| (x, y)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                let ok = if w[0].0 == w[1].0 { w[0].1 == w[1].1 } else { w[0].1 <= w[1].1 };
                ensure(ok, || format!("{} {m}: ordering broken at {:?}", c.id(), w))?;
            }
            let mut ys: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            ys.sort_by(f64::total_cmp);
            let n = ys.len() as f64;
            for k in 0..bins {
                let below = ys.partition_point(|&y| y <= edges[k + 1]) as f64 / n;
                worst_ks = worst_ks.max((below - reference.cdf()[k]).abs());
            }
            matched += 1;
        }
    }
    ensure(worst_ks <= 2.0 / bins as f64, || format!("KS {worst_ks:.4} over {:.4}", 2.0 / bins as f64))?;
    Ok(format!(
        "bias residual RMS {:.3}% worst over {tested} volumes; KS {worst_ks:.4} <= {:.4} and order kept on {matched} volumes",
        100.0 * worst_rms,
        2.0 / bins as f64
    ))
}

fn c5_norms() -> Outcome {
    let mut r = rng(5);
    let c = 3;
    let x = Tensor::<f64>::randn(&[4, c, 5, 6], 2.0, &mut r);
    let g = Tensor::uniform(&[c], 0.5, 1.5, &mut r);
    let b = Tensor::randn(&[c], 1.0, &mut r);
    let tape = Tape::new();
    let (gv, bv) = (tape.constant(&g), tape.constant(&b));
    let stats = ChannelStats::from_tensor(&x).map_err(|e| e.to_string())?;
    let rbn = tape.constant(&x).reference_batch_norm(&stats, gv, bv, 1e-5).map_err(|e| e.to_string())?.value();
    let bn = tape.constant(&x).batch_norm(gv, bv, 1e-5).map_err(|e| e.to_string())?.value();
    ensure(rbn == bn, || "reference_batch_norm(x, ref=x) differs from batch_norm(x)".into())?;

    let one = Tensor::<f64>::randn(&[1, c, 5, 6], 2.0, &mut r);
    let copies = Tensor::stack_batch(&vec![one.clone(); 1024]).map_err(|e| e.to_string())?;
    let ref_stats = ChannelStats::from_tensor(&copies).map_err(|e| e.to_string())?;
    let unit = (Tensor::new(&[c], vec![1.0; c]).unwrap(), Tensor::<f64>::zeros(&[c]));
    let (g1, b0) = (tape.constant(&unit.0), tape.constant(&unit.1));
    let vbn = tape.constant(&one).virtual_batch_norm(&ref_stats, g1, b0, 1e-5).map_err(|e| e.to_string())?.value();
    let inst = tape.constant(&one).batch_norm(g1, b0, 1e-5).map_err(|e| e.to_string())?.value();
    let diff = vbn.iter().zip(inst.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(diff < 1e-3, || format!("VBN vs instance norm at R=1024 differs by {diff:.2e}"))?;
    Ok(format!("RBN(x, ref=x) == BN(x) bit-exactly; |VBN - instance norm| = {diff:.1e} at R=1024"))
}

fn c6_segmentation() -> Outcome {
    let t = Instant::now();
    let cases = generate_dataset(20, 7, &DatasetSpec::default()).map_err(|e| e.to_string())?;
    let (train, held) = cases.split_at(15);
    let (pre, train_p) = Preprocessor::fit(train, PreprocessConfig::default()).map_err(|e| e.to_string())?;
    let data = SegDataset::new(train_p.into_iter().map(|(c, _)| c).collect()).map_err(|e| e.to_string())?;
    let cfg = SegTrainConfig::default();
    ensure(cfg.steps <= 2000, || format!("default steps {} over 2000", cfg.steps))?;
    let mut trainer = Trainer::new(&data, GeneratorConfig::default(), DiscriminatorConfig::default(), cfg).map_err(|e| e.to_string())?;
    trainer.train(&data, None, |_, _| {}).map_err(|e| e.to_string())?;
    let steps = trainer.step();
    let mut model = trainer.model();
    let mut reports = Vec::new();
    for c in held {
        let (p, _) = pre.apply(c).map_err(|e| e.to_string())?;
        let (regions, labels) = segment_case(&mut model, &p).map_err(|e| e.to_string())?;
        ensure(regions.is_nested(), || format!("{}: prediction not nested", c.id()))?;
        reports.push(evaluate_case(c.id(), &labels, c.truth().expect("phantom truth"), 95.0).map_err(|e| e.to_string())?);
    }
    let s = aggregate(&reports).map_err(|e| e.to_string())?;
    let mean = |r: Region| s.get(r, "dice").and_then(|m| m.mean).unwrap_or(0.0);
    let (wt, ct, et) = (mean(Region::Wt), mean(Region::Ct), mean(Region::Et));
    let took = t.elapsed();
    let line = format!("{steps} steps; held-out Dice WT {wt:.3} CT {ct:.3} ET {et:.3}; nested; {}", secs(took));
    ensure(wt > 0.8 && ct > 0.6, || line.clone())?;
    ensure(took < Duration::from_secs(3600), || line.clone())?;
    Ok(line)
}

fn c7_training_protocol() -> Outcome {
    let spec = DatasetSpec { dims: [16; 3], r_wt: (3.0, 5.0), center_jitter: 1.0, ..DatasetSpec::default() };
    let data = SegDataset::new(generate_dataset(3, 9, &spec).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (g, d) = (GeneratorConfig { depth: 2, base_channels: 4 }, DiscriminatorConfig { layers: 2, base_channels: 4 });
    let cfg = SegTrainConfig { steps: 8, batch_size: 4, ref_size: 2, ..SegTrainConfig::default() };
    let run = |until: Option<u64>| -> Result<Trainer, String> {
        let mut t = Trainer::new(&data, g, d, cfg.clone()).map_err(|e| e.to_string())?;
        t.train(&data, until, |_, _| {}).map_err(|e| e.to_string())?;
        Ok(t)
    };
    let (a, b) = (run(None)?, run(None)?);
    let (du, gu) = a.updates();
    ensure(du.abs_diff(gu) <= 1, || format!("{du} D updates vs {gu} G updates"))?;
    ensure(a.history() == b.history(), || "equal seeds gave different loss histories".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("mid.ckpt");
    run(Some(4))?.save(&path).map_err(|e| e.to_string())?;
    let mut resumed = Trainer::load(&path).map_err(|e| e.to_string())?;
    resumed.train(&data, None, |_, _| {}).map_err(|e| e.to_string())?;
    ensure(resumed.history() == a.history(), || "resumed run diverged from the uninterrupted one".into())?;
    ensure(resumed.generator() == a.generator() && resumed.discriminator() == a.discriminator(), || {
        "resumed parameters differ".into()
    })?;
    Ok(format!("{du} D / {gu} G updates; identical histories; resume at step 4 matches bit-exactly"))
}

fn c8_survival() -> Outcome {
    let t = Instant::now();
    let cases = generate_dataset(50, 11, &DatasetSpec::default()).map_err(|e| e.to_string())?;
    let samples: Vec<SurvivalSample> = cases
        .iter()
        .map(|c| SurvivalSample::from_case(c, None, SlicePolicy::MaxWtArea))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let toy = &samples[..4];
    let cfg = SurvivalTrainConfig { epochs: 500, flip: false, ..SurvivalTrainConfig::default() };
    let fit = train_survival(toy, &SplitSpec::default(), &cfg).map_err(|e| e.to_string())?;
    let inputs: Vec<_> = toy.iter().map(|s| &s.input).collect();
    let p = fit.model.predict(&inputs).map_err(|e| e.to_string())?;
    let mse = p.iter().zip(toy).map(|(p, s)| (p - s.survival_days.unwrap() / 1750.0).powi(2)).sum::<f64>() / 4.0;
    ensure(mse < 1e-3, || format!("toy train MSE {mse:.2e} after {} epochs", fit.history.len()))?;

    let fit = train_survival(&samples, &SplitSpec::default(), &SurvivalTrainConfig::default()).map_err(|e| e.to_string())?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| &samples[i]).collect::<Vec<_>>();
    let (train, test) = (pick(&fit.split.train), pick(&fit.split.test));
    let mean = train.iter().map(|s| s.survival_days.unwrap()).sum::<f64>() / train.len() as f64;
    let truth: Vec<f64> = test.iter().map(|s| s.survival_days.unwrap()).collect();
    let pred = fit.model.predict_days(&test.iter().map(|s| &s.input).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let acc = accuracy(&pred, &truth, 180.0).map_err(|e| e.to_string())?;
    let base = accuracy(&vec![mean; truth.len()], &truth, 180.0).map_err(|e| e.to_string())?;
    ensure(acc >= base + 0.1, || format!("accuracy {acc:.2} vs mean baseline {base:.2}"))?;

    let age = scale_age(50.0).map_err(|e| e.to_string())?;
    let days = scale_survival(1750.0).map_err(|e| e.to_string())?;
    let back = unscale_survival(1.0).map_err(|e| e.to_string())?;
    ensure(age == 0.5 && days == 1.0 && back == 1750.0, || format!("scaling gave {age}, {days}, {back}"))?;
    Ok(format!(
        "toy MSE {mse:.1e}; test accuracy {acc:.2} vs mean baseline {base:.2} on {} cases; scaling exact; {}",
        truth.len(),
        secs(t.elapsed())
    ))
}

fn c9_formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(9);
    let dims = [7, 5, 3];
    let sp = [0.9, 1.1, 2.5];
    let intensity = Volume::from_fn(dims, sp, VolumeKind::Intensity, |_, _, _| r.random_range(-500.0..500.0f32)).unwrap();
    let labels = Volume::from_fn(dims, sp, VolumeKind::Label, |x, y, z| ((x * 3 + y + z) % 5) as f32).unwrap();
    let int16 = Volume::from_fn(dims, sp, VolumeKind::Intensity, |x, y, z| (x as f32 - 3.0) * 1000.0 + (y * 10 + z) as f32).unwrap();

    let nii = dir.path().join("v.nii");
    for v in [&intensity, &labels] {
        write_nifti(v, &nii).map_err(|e| e.to_string())?;
        ensure(&read_nifti(&nii, v.kind()).map_err(|e| e.to_string())? == v, || "NIfTI round trip changed data".into())?;
    }
    let raw = dir.path().join("v.raw");
    for (v, dt) in [(&intensity, RawDtype::Float32), (&labels, RawDtype::Uint8), (&int16, RawDtype::Int16)] {
        write_raw(v, dt, &raw).map_err(|e| e.to_string())?;
        ensure(&read_raw(&raw, v.kind()).map_err(|e| e.to_string())? == v, || format!("raw {dt:?} round trip changed data"))?;
    }
    for axis in Axis::ALL {
        let maps: Vec<Vec<f32>> = extract_volume_slices(&intensity, axis).into_iter().map(|s| s.data).collect();
        let back = assemble_volume(&maps, axis, dims, sp, VolumeKind::Intensity).map_err(|e| e.to_string())?;
        ensure(back == intensity, || format!("slice identity broken along {axis:?}"))?;
    }

    // one case with 155 slices along every axis
    let side = 155;
    let blank = Volume::new([side; 3], [1.0; 3], vec![0.0; side * side * side], VolumeKind::Intensity).unwrap();
    let case = PatientCase::new("count", std::array::from_fn(|_| blank.clone()), None, None).map_err(|e| e.to_string())?;
    let per_case: usize = Axis::ALL.iter().map(|&a| {
        let s = extract_slices(&case, a);
        s.inputs.len() * s.inputs[0].channels
    }).sum();
    let total = per_case * 285;
    ensure(total == 530_100, || format!("3 axes x 4 modalities x 155 slices x 285 patients gave {total}"))?;
    Ok(format!("NIfTI f32/u8 and raw f32/u8/i16 bit-exact; slice identity on 3 axes; {per_case} x 285 = {total}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", c1_gradients),
        ("adjoint identity", c2_adjoint),
        ("metric oracles", c3_metrics),
        ("preprocessing recovery", c4_preprocess),
        ("normalization semantics", c5_norms),
        ("phantom segmentation", c6_segmentation),
        ("turn-taking and determinism", c7_training_protocol),
        ("survival overfit and signal", c8_survival),
        ("format round-trips", c9_formats),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
