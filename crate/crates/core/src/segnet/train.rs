//! Turn-taking adversarial training with checkpoint-exact resumption.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tumorseg_tensor::{Adam, AdamConfig, Checkpoint, ParamSet, Tape, Tensor};

use super::data::{BatchRef, Schedule, SegDataset};
use super::{DiscriminatorConfig, GeneratorConfig};
use crate::error::{Error, Result};
use crate::nn::{stack_rows, NormPass, RefStats};

#[derive(Clone, Debug, PartialEq)]
pub struct SegTrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    /// Slices in the fixed normalization reference batch.
    pub ref_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the per-pixel cross-entropy between `(g + 1) / 2` and the
    /// 0/1 target.
    pub pixel_weight: f64,
    /// Skip leading/trailing slices without any head voxels.
    pub crop_background: bool,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        SegTrainConfig {
            steps: 400,
            batch_size: 8,
            ref_size: 4,
            lr_g: 2e-4,
            lr_d: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            pixel_weight: 100.0,
            crop_background: true,
            seed: 1,
        }
    }
}

/// Losses of one turn-taking step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub d_loss: f64,
    /// Adversarial term plus the weighted pixel term.
    pub g_loss: f64,
    /// Whole-tumor Dice of the batch prediction before the update.
    pub train_dice_wt: f64,
}

fn adam(lr: f64, cfg: &SegTrainConfig) -> AdamConfig {
    AdamConfig { lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: 1e-8 }
}

/// Mutable training state. Everything needed to continue bit-identically is
/// saved by [`Trainer::to_checkpoint`].
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: SegTrainConfig,
    pub g_cfg: GeneratorConfig,
    pub d_cfg: DiscriminatorConfig,
    g: ParamSet<f32>,
    d: ParamSet<f32>,
    g_opt: Adam<f32>,
    d_opt: Adam<f32>,
    ref_image: Tensor<f32>,
    ref_target: Tensor<f32>,
    step: u64,
    d_updates: u64,
    g_updates: u64,
    history: Vec<StepRecord>,
}

/// Whole-tumor Dice between channel 0 of two `[n,3,h,w]` score tensors,
/// thresholded at zero.
fn batch_dice_wt(pred: &[f32], target: &[f32], n: usize, plane: usize) -> f64 {
    let (mut inter, mut total) = (0usize, 0usize);
    for i in 0..n {
        let base = i * 3 * plane;
        for j in base..base + plane {
            let (p, t) = (pred[j] > 0.0, target[j] > 0.0);
            inter += (p && t) as usize;
            total += p as usize + t as usize;
        }
    }
    if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 }
}

pub(crate) fn generator_stats(cfg: &GeneratorConfig, g: &ParamSet<f32>, image: &Tensor<f32>) -> Result<RefStats<f32>> {
    let tape = Tape::new();
    let p = g.bind_constant(&tape);
    let mut rec = NormPass::record();
    cfg.forward(&p, tape.constant(image), &mut rec)?;
    Ok(rec.into_stats())
}

fn discriminator_stats(cfg: &DiscriminatorConfig, d: &ParamSet<f32>, image: &Tensor<f32>, target: &Tensor<f32>) -> Result<RefStats<f32>> {
    let tape = Tape::new();
    let p = d.bind_constant(&tape);
    let mut rec = NormPass::record();
    cfg.forward(&p, tape.constant(image), tape.constant(target), &mut rec)?;
    Ok(rec.into_stats())
}

/// ±1 targets to 0/1.
fn unit_target(t: &Tensor<f32>) -> Tensor<f32> {
    Tensor::new(t.shape(), t.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()).expect("same shape")
}

fn finite(x: f64) -> bool {
    x.is_finite()
}

impl Trainer {
    /// Fresh networks; the reference batch is the first scheduled batch of
    /// the run, cut to its first `ref_size` slices.
    pub fn new(data: &SegDataset, g_cfg: GeneratorConfig, d_cfg: DiscriminatorConfig, config: SegTrainConfig) -> Result<Self> {
        if config.ref_size == 0 {
            return Err(Error::InvalidParameter("reference batch size must be positive".into()));
        }
        let schedule = Schedule::new(data, config.batch_size, config.crop_background, config.seed)?;
        let (_, first) = schedule.at(0);
        let end = first.range.end.min(first.range.start + config.ref_size);
        let (ref_image, ref_target) = data.batch(first.case, first.axis, first.range.start..end, g_cfg.multiple());
        Self::with_reference(g_cfg, d_cfg, config, ref_image, ref_target)
    }

    /// Fresh networks with an explicit reference batch.
    pub fn with_reference(
        g_cfg: GeneratorConfig,
        d_cfg: DiscriminatorConfig,
        config: SegTrainConfig,
        ref_image: Tensor<f32>,
        ref_target: Tensor<f32>,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g = g_cfg.init_params(&mut rng);
        let d = d_cfg.init_params(&mut rng);
        let g_opt = Adam::new(adam(config.lr_g, &config), &g);
        let d_opt = Adam::new(adam(config.lr_d, &config), &d);
        Ok(Trainer {
            config,
            g_cfg,
            d_cfg,
            g,
            d,
            g_opt,
            d_opt,
            ref_image,
            ref_target,
            step: 0,
            d_updates: 0,
            g_updates: 0,
            history: Vec::new(),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn updates(&self) -> (u64, u64) {
        (self.d_updates, self.g_updates)
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn generator(&self) -> &ParamSet<f32> {
        &self.g
    }

    pub fn discriminator(&self) -> &ParamSet<f32> {
        &self.d
    }

    pub fn generator_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.g
    }

    pub fn discriminator_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.d
    }

    pub fn reference(&self) -> (&Tensor<f32>, &Tensor<f32>) {
        (&self.ref_image, &self.ref_target)
    }

    /// Epoch of the next scheduled step.
    pub fn epoch(&self, data: &SegDataset) -> Result<u64> {
        let s = Schedule::new(data, self.config.batch_size, self.config.crop_background, self.config.seed)?;
        Ok(self.step / s.steps_per_epoch() as u64)
    }

    /// One discriminator update then one generator update on a batch of
    /// images `[n,4,H,W]` and ±1 targets `[n,3,H,W]`.
    ///
    /// On a non-finite loss the state is left as it was and
    /// [`Error::TrainingDiverged`] is returned.
    pub fn train_on_batch(&mut self, image: &Tensor<f32>, target: &Tensor<f32>) -> Result<StepRecord> {
        let s = image.shape().to_vec();
        let (n, n_ref) = (s[0], self.ref_image.shape()[0]);

        // Both networks see the reference batch stacked in front of the
        // batch, so the normalization statistics carry gradient.
        let tape_g = Tape::new();
        let gp = self.g.bind(&tape_g);
        let x = tape_g.constant(image);
        let joint_x = tape_g.constant(&stack_rows(&[&self.ref_image, image])?);
        let fake = self.g_cfg.forward(&gp, joint_x, &mut NormPass::coupled(n_ref))?;
        let fake_t = fake.to_tensor();
        let dice = batch_dice_wt(fake_t.data(), target.data(), n, s[2] * s[3]);

        // discriminator turn: real and fake rows in one pass; reference
        // normalization keeps the rows independent of each other
        let tape_d = Tape::new();
        let dp = self.d.bind(&tape_d);
        let d_img = tape_d.constant(&stack_rows(&[&self.ref_image, image, image])?);
        let d_seg = tape_d.constant(&stack_rows(&[&self.ref_target, target, &fake_t])?);
        let scores = self.d_cfg.forward(&dp, d_img, d_seg, &mut NormPass::coupled(n_ref))?;
        let labels = {
            let sh = scores.shape();
            let half = sh.iter().product::<usize>() / 2;
            let mut l = vec![1.0; 2 * half];
            l[half..].fill(0.0);
            Tensor::new(&sh, l)?
        };
        // per-half means, summed: bce(real, 1) + bce(fake, 0)
        let d_loss_v = scores.bce(tape_d.constant(&labels))?.scale(2.0);
        let d_loss = d_loss_v.item() as f64;
        if !finite(d_loss) {
            return Err(Error::TrainingDiverged { step: self.step, d_loss, g_loss: f64::NAN });
        }
        let saved = (self.d.clone(), self.d_opt.clone());
        let grads = tape_d.backward(d_loss_v)?;
        self.d.zero_grad();
        self.d.absorb(&dp, &grads)?;
        self.d_opt.step(&mut self.d)?;
        self.d_updates += 1;

        // generator turn, against the updated discriminator; its parameters
        // and the reference rows are constants here, so recorded statistics
        // give the same values and gradients as a coupled pass
        let d_stats = discriminator_stats(&self.d_cfg, &self.d, &self.ref_image, &self.ref_target)?;
        let dc = self.d.bind_constant(&tape_g);
        let score = self.d_cfg.forward(&dc, x, fake, &mut NormPass::apply(&d_stats))?;
        let ones = tape_g.constant(&Tensor::full(&score.shape(), 1.0));
        let adv = score.bce(ones)?;
        let pixel = fake.add_scalar(1.0).scale(0.5).bce(tape_g.constant(&unit_target(target)))?;
        let g_loss_v = adv.add(pixel.scale(self.config.pixel_weight))?;
        let g_loss = g_loss_v.item() as f64;
        if !finite(g_loss) {
            (self.d, self.d_opt) = saved;
            self.d_updates -= 1;
            return Err(Error::TrainingDiverged { step: self.step, d_loss, g_loss });
        }
        let grads = tape_g.backward(g_loss_v)?;
        self.g.zero_grad();
        self.g.absorb(&gp, &grads)?;
        self.g_opt.step(&mut self.g)?;
        self.g_updates += 1;

        let rec = StepRecord { d_loss, g_loss, train_dice_wt: dice };
        self.history.push(rec);
        self.step += 1;
        Ok(rec)
    }

    /// The scheduled batch for the next step.
    pub fn next_batch(&self, data: &SegDataset) -> Result<BatchRef> {
        let s = Schedule::new(data, self.config.batch_size, self.config.crop_background, self.config.seed)?;
        Ok(s.at(self.step).1)
    }

    /// Runs scheduled steps until `until` (exclusive) or `config.steps`,
    /// whichever is smaller. `log` is called after every step.
    pub fn train(&mut self, data: &SegDataset, until: Option<u64>, mut log: impl FnMut(u64, &StepRecord)) -> Result<()> {
        let schedule = Schedule::new(data, self.config.batch_size, self.config.crop_background, self.config.seed)?;
        let end = until.map_or(self.config.steps, |u| u.min(self.config.steps));
        while self.step < end {
            let (_, b) = schedule.at(self.step);
            let (image, target) = data.batch(b.case, b.axis, b.range, self.g_cfg.multiple());
            let rec = self.train_on_batch(&image, &target)?;
            log(self.step - 1, &rec);
        }
        Ok(())
    }

    pub fn model(&self) -> super::SegModel {
        super::SegModel::new(self.g_cfg, self.g.clone(), self.ref_image.clone(), self.step)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert_meta("kind", "segnet");
        ck.insert_meta("g.depth", self.g_cfg.depth);
        ck.insert_meta("g.base_channels", self.g_cfg.base_channels);
        ck.insert_meta("d.layers", self.d_cfg.layers);
        ck.insert_meta("d.base_channels", self.d_cfg.base_channels);
        let c = &self.config;
        ck.insert_meta("train.steps", c.steps);
        ck.insert_meta("train.batch_size", c.batch_size);
        ck.insert_meta("train.ref_size", c.ref_size);
        ck.insert_meta("train.lr_g", format!("{:?}", c.lr_g));
        ck.insert_meta("train.lr_d", format!("{:?}", c.lr_d));
        ck.insert_meta("train.beta1", format!("{:?}", c.beta1));
        ck.insert_meta("train.beta2", format!("{:?}", c.beta2));
        ck.insert_meta("train.pixel_weight", format!("{:?}", c.pixel_weight));
        ck.insert_meta("train.crop_background", c.crop_background);
        ck.insert_meta("seed", c.seed);
        ck.insert_meta("step", self.step);
        ck.insert_meta("d_updates", self.d_updates);
        ck.insert_meta("g_updates", self.g_updates);
        ck.insert_meta("g_opt.step", self.g_opt.step_count());
        ck.insert_meta("d_opt.step", self.d_opt.step_count());
        let hist: Vec<String> =
            self.history.iter().map(|r| format!("{:?},{:?},{:?}", r.d_loss, r.g_loss, r.train_dice_wt)).collect();
        ck.insert_meta("history", hist.join(";"));
        for (prefix, set) in [("g", &self.g), ("d", &self.d)] {
            for (k, t) in set.iter() {
                ck.insert_tensor(format!("{prefix}.{k}"), t);
            }
        }
        for (prefix, opt) in [("g_opt", &self.g_opt), ("d_opt", &self.d_opt)] {
            for (k, m, v) in opt.moments() {
                ck.insert_tensor(format!("{prefix}.m.{k}"), &Tensor::new(&[m.len()], m.to_vec()).unwrap());
                ck.insert_tensor(format!("{prefix}.v.{k}"), &Tensor::new(&[v.len()], v.to_vec()).unwrap());
            }
        }
        ck.insert_tensor("ref.image", &self.ref_image);
        ck.insert_tensor("ref.target", &self.ref_target);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != "segnet" {
            return Err(Error::InvalidParameter("checkpoint is not a segmentation model".into()));
        }
        let g_cfg = GeneratorConfig { depth: ck.meta_parse("g.depth")?, base_channels: ck.meta_parse("g.base_channels")? };
        let d_cfg = DiscriminatorConfig { layers: ck.meta_parse("d.layers")?, base_channels: ck.meta_parse("d.base_channels")? };
        let config = SegTrainConfig {
            steps: ck.meta_parse("train.steps")?,
            batch_size: ck.meta_parse("train.batch_size")?,
            ref_size: ck.meta_parse("train.ref_size")?,
            lr_g: ck.meta_parse("train.lr_g")?,
            lr_d: ck.meta_parse("train.lr_d")?,
            beta1: ck.meta_parse("train.beta1")?,
            beta2: ck.meta_parse("train.beta2")?,
            pixel_weight: ck.meta_parse("train.pixel_weight")?,
            crop_background: ck.meta_parse("train.crop_background")?,
            seed: ck.meta_parse("seed")?,
        };
        // Parameter names and order come from a fresh initialisation.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g: ParamSet<f32> = g_cfg.init_params(&mut rng);
        let mut d: ParamSet<f32> = d_cfg.init_params(&mut rng);
        for (prefix, set) in [("g", &mut g), ("d", &mut d)] {
            for (k, t) in set.iter_mut() {
                let saved = ck.tensor(&format!("{prefix}.{k}"))?;
                if saved.shape() != t.shape() {
                    return Err(Error::InvalidParameter(format!("checkpoint tensor {prefix}.{k} has shape {:?}", saved.shape())));
                }
                t.data_mut().copy_from_slice(saved.data());
            }
        }
        let load_opt = |prefix: &str, set: &ParamSet<f32>, lr: f64| -> Result<Adam<f32>> {
            let mut moments = IndexMap::new();
            for (k, t) in set.iter() {
                let m = ck.tensor(&format!("{prefix}.m.{k}"))?.data().to_vec();
                let v = ck.tensor(&format!("{prefix}.v.{k}"))?.data().to_vec();
                if m.len() != t.len() || v.len() != t.len() {
                    return Err(Error::InvalidParameter(format!("optimizer state for {k} has the wrong size")));
                }
                moments.insert(k.to_string(), (m, v));
            }
            Ok(Adam::from_parts(adam(lr, &config), ck.meta_parse(&format!("{prefix}.step"))?, moments))
        };
        let g_opt = load_opt("g_opt", &g, config.lr_g)?;
        let d_opt = load_opt("d_opt", &d, config.lr_d)?;
        let history = parse_history(ck.meta("history")?)?;
        Ok(Trainer {
            g_cfg,
            d_cfg,
            g,
            d,
            g_opt,
            d_opt,
            ref_image: ck.tensor("ref.image")?.clone(),
            ref_target: ck.tensor("ref.target")?.clone(),
            step: ck.meta_parse("step")?,
            d_updates: ck.meta_parse("d_updates")?,
            g_updates: ck.meta_parse("g_updates")?,
            history,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn parse_history(s: &str) -> Result<Vec<StepRecord>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|rec| {
            let f: Vec<f64> = rec.split(',').map(|x| x.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad_history())?;
            match f.as_slice() {
                &[d_loss, g_loss, train_dice_wt] => Ok(StepRecord { d_loss, g_loss, train_dice_wt }),
                _ => Err(bad_history()),
            }
        })
        .collect()
}

fn bad_history() -> Error {
    Error::Tensor(tumorseg_tensor::TensorError::UnsupportedCheckpoint("malformed history".into()))
}

/// Appends `step,d_loss,g_loss,train_dice_wt` rows; writes the header if the
/// file is new.
pub struct LossLog {
    file: std::fs::File,
}

impl LossLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let exists = path.as_ref().exists();
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            writeln!(file, "step,d_loss,g_loss,train_dice_wt")?;
        }
        Ok(LossLog { file })
    }

    pub fn append(&mut self, step: u64, r: &StepRecord) -> Result<()> {
        writeln!(self.file, "{step},{:.6},{:.6},{:.6}", r.d_loss, r.g_loss, r.train_dice_wt)?;
        Ok(())
    }
}
