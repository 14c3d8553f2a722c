//! Survival regression training with flip/rescale augmentation and early
//! stopping on validation MSE.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorseg_tensor::{Adam, AdamConfig, Checkpoint, ParamSet, Tape, Tensor};

use super::input::{build_input, truth_regions, SlicePolicy, SurvivalInput};
use super::net::{stack_inputs, SurvivalNetConfig};
use super::scale::{scale_survival, unscale_survival};
use super::split::{Split, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::RegionMaskSet;
use crate::nn::{stack_rows, NormPass, RefStats};
use crate::preprocess::{augment, AugmentOp, MAX_RESCALE, MIN_RESCALE};
use crate::volume::{Axis, PatientCase, Slice, SliceStack};

/// One case prepared for the survival network.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalSample {
    pub id: String,
    pub input: SurvivalInput,
    pub survival_days: Option<f64>,
}

impl SurvivalSample {
    /// Uses `regions` when given, else the case's ground truth.
    pub fn from_case(case: &PatientCase, regions: Option<&RegionMaskSet>, policy: SlicePolicy) -> Result<Self> {
        let owned;
        let regions = match regions {
            Some(r) => r,
            None => {
                owned = truth_regions(case).ok_or_else(|| {
                    Error::InvalidParameter(format!("case {} has neither ground truth nor predicted regions", case.id()))
                })?;
                &owned
            }
        };
        let input = build_input(case, regions, policy)?;
        let survival_days = case.clinical().and_then(|c| c.survival_days());
        Ok(SurvivalSample { id: case.id().to_string(), input, survival_days })
    }

    fn target(&self) -> Result<f32> {
        let d = self.survival_days.ok_or_else(|| Error::MissingClinical(self.id.clone()))?;
        Ok(scale_survival(d)? as f32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalTrainConfig {
    pub net: SurvivalNetConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Training samples in the fixed normalization reference batch.
    pub ref_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub flip: bool,
    pub rescale: bool,
    pub seed: u64,
}

impl Default for SurvivalTrainConfig {
    fn default() -> Self {
        SurvivalTrainConfig {
            net: SurvivalNetConfig::default(),
            epochs: 300,
            batch_size: 8,
            ref_size: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            patience: 40,
            flip: true,
            rescale: false,
            seed: 1,
        }
    }
}

impl SurvivalTrainConfig {
    fn validate(&self) -> Result<()> {
        self.net.validate().map_err(Error::InvalidParameter)?;
        if self.epochs == 0 || self.batch_size == 0 || self.ref_size == 0 {
            return Err(Error::InvalidParameter("epochs, batch_size and ref_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// Mean MSE of the training batches (augmented, before each update).
    pub train_loss: f64,
    /// MSE on the validation split after the epoch, if there is one.
    pub val_mse: Option<f64>,
}

/// A trained survival network with its normalization reference.
#[derive(Clone, Debug)]
pub struct SurvivalModel {
    pub config: SurvivalNetConfig,
    params: ParamSet<f32>,
    ref_image: Tensor<f32>,
    ref_age: Tensor<f32>,
    pub epochs_trained: usize,
}

fn reference_stats(cfg: &SurvivalNetConfig, p: &ParamSet<f32>, image: &Tensor<f32>, age: &Tensor<f32>) -> Result<RefStats<f32>> {
    let tape = Tape::new();
    let bp = p.bind_constant(&tape);
    let mut rec = NormPass::record();
    cfg.forward(&bp, tape.constant(image), tape.constant(age), &mut rec)?;
    Ok(rec.into_stats())
}

impl SurvivalModel {
    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    /// Scaled survival in (0, 1) for each input.
    pub fn predict(&self, inputs: &[&SurvivalInput]) -> Result<Vec<f64>> {
        let stats = reference_stats(&self.config, &self.params, &self.ref_image, &self.ref_age)?;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(32) {
            let (img, age) = stack_inputs(chunk, self.config.multiple())?;
            let tape = Tape::new();
            let p = self.params.bind_constant(&tape);
            let y = self.config.forward(&p, tape.constant(&img), tape.constant(&age), &mut NormPass::apply(&stats))?;
            out.extend(y.value().iter().map(|&v| v as f64));
        }
        Ok(out)
    }

    pub fn predict_days(&self, inputs: &[&SurvivalInput]) -> Result<Vec<f64>> {
        self.predict(inputs)?.into_iter().map(unscale_survival).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert_meta("kind", "survival");
        ck.insert_meta("net.blocks", self.config.blocks);
        ck.insert_meta("net.base_channels", self.config.base_channels);
        ck.insert_meta("net.clinical_hidden", self.config.clinical_hidden);
        ck.insert_meta("net.fc_hidden", self.config.fc_hidden);
        ck.insert_meta("epochs_trained", self.epochs_trained);
        for (k, t) in self.params.iter() {
            ck.insert_tensor(format!("p.{k}"), t);
        }
        ck.insert_tensor("ref.image", &self.ref_image);
        ck.insert_tensor("ref.age", &self.ref_age);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != "survival" {
            return Err(Error::InvalidParameter("checkpoint is not a survival model".into()));
        }
        let config = SurvivalNetConfig {
            blocks: ck.meta_parse("net.blocks")?,
            base_channels: ck.meta_parse("net.base_channels")?,
            clinical_hidden: ck.meta_parse("net.clinical_hidden")?,
            fc_hidden: ck.meta_parse("net.fc_hidden")?,
        };
        config.validate().map_err(Error::InvalidParameter)?;
        let mut params: ParamSet<f32> = config.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        for (k, t) in params.iter_mut() {
            let saved = ck.tensor(&format!("p.{k}"))?;
            if saved.shape() != t.shape() {
                return Err(Error::InvalidParameter(format!("checkpoint tensor p.{k} has shape {:?}", saved.shape())));
            }
            t.data_mut().copy_from_slice(saved.data());
        }
        Ok(SurvivalModel {
            config,
            params,
            ref_image: ck.tensor("ref.image")?.clone(),
            ref_age: ck.tensor("ref.age")?.clone(),
            epochs_trained: ck.meta_parse("epochs_trained")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Clone, Debug)]
pub struct SurvivalFit {
    /// Parameters of the best validation epoch (the last epoch without a
    /// validation split).
    pub model: SurvivalModel,
    pub history: Vec<EpochRecord>,
    /// Indices into the samples sorted by id.
    pub split: Split,
    pub best_epoch: usize,
}

/// Flips (and optionally rescales) image and mask channels alike, then
/// re-binarizes the masks.
fn augment_input(inp: &SurvivalInput, ops: &[AugmentOp], seed: u64) -> Result<SurvivalInput> {
    let s = inp.image.shape();
    let (h, w) = (s[1], s[2]);
    let n = h * w;
    let d = inp.image.data();
    let stack = SliceStack {
        axis: Axis::Z,
        index_range: inp.slice..inp.slice + 1,
        inputs: vec![Slice::new(4, h, w, d[..4 * n].to_vec())?],
        targets: Some(vec![Slice::new(3, h, w, d[4 * n..].to_vec())?]),
    };
    let out = augment(&stack, ops, seed)?;
    let mut data = out.inputs[0].data.clone();
    let masks = &out.targets.as_ref().expect("targets kept")[0].data;
    data.extend(masks.iter().map(|&m| if m >= 0.5 { 1.0 } else { 0.0 }));
    Ok(SurvivalInput { image: Tensor::new(s, data)?, ..inp.clone() })
}

fn mse(pred: &[f64], samples: &[&SurvivalSample]) -> Result<f64> {
    let mut acc = 0.0;
    for (p, s) in pred.iter().zip(samples) {
        let t = s.target()? as f64;
        acc += (p - t) * (p - t);
    }
    Ok(acc / pred.len() as f64)
}

/// Trains on the training part of `spec`'s split of `samples` (sorted by id
/// first). Every training and validation sample needs `survival_days`.
pub fn train_survival(samples: &[SurvivalSample], spec: &SplitSpec, cfg: &SurvivalTrainConfig) -> Result<SurvivalFit> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("no survival samples".into()));
    }
    let mut sorted: Vec<&SurvivalSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let split = spec.split(sorted.len())?;
    if split.train.is_empty() {
        return Err(Error::EmptyInput("training split is empty".into()));
    }
    let train: Vec<&SurvivalSample> = split.train.iter().map(|&i| sorted[i]).collect();
    let val: Vec<&SurvivalSample> = split.val.iter().map(|&i| sorted[i]).collect();
    let targets: Vec<f32> = train.iter().map(|s| s.target()).collect::<Result<_>>()?;
    for s in &val {
        s.target()?;
    }

    let net = cfg.net;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: ParamSet<f32> = net.init_params(&mut rng);
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: 1e-8 }, &params);
    let refs: Vec<&SurvivalInput> = train.iter().take(cfg.ref_size).map(|s| &s.input).collect();
    let (ref_image, ref_age) = stack_inputs(&refs, net.multiple())?;
    let model_of = |params: &ParamSet<f32>, epochs: usize| SurvivalModel {
        config: net,
        params: params.clone(),
        ref_image: ref_image.clone(),
        ref_age: ref_age.clone(),
        epochs_trained: epochs,
    };

    let mut ops = Vec::new();
    if cfg.flip {
        ops.extend([AugmentOp::FlipH, AugmentOp::FlipV]);
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamSet<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch_ops = ops.clone();
            if cfg.rescale {
                batch_ops.push(AugmentOp::Rescale(rng.random_range(MIN_RESCALE..=MAX_RESCALE)));
            }
            let aug_seed: u64 = rng.random();
            let inputs: Vec<SurvivalInput> = chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    if batch_ops.is_empty() {
                        Ok(train[i].input.clone())
                    } else {
                        augment_input(&train[i].input, &batch_ops, aug_seed.wrapping_add(k as u64))
                    }
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&SurvivalInput> = inputs.iter().collect();
            let (img, age) = stack_inputs(&refs, net.multiple())?;
            let tgt = Tensor::new(&[chunk.len(), 1], chunk.iter().map(|&i| targets[i]).collect())?;

            // reference rows ride along so their statistics carry gradient
            let joint = stack_rows(&[&ref_image, &img])?;
            let tape = Tape::new();
            let bp = params.bind(&tape);
            let y = net.forward(&bp, tape.constant(&joint), tape.constant(&age), &mut NormPass::coupled(ref_image.shape()[0]))?;
            let loss = y.mse(tape.constant(&tgt))?;
            let lv = loss.item() as f64;
            if !lv.is_finite() {
                return Err(Error::SurvivalDiverged { epoch: epoch as u64, loss: lv });
            }
            let grads = tape.backward(loss)?;
            params.zero_grad();
            params.absorb(&bp, &grads)?;
            opt.step(&mut params)?;
            loss_sum += lv * chunk.len() as f64;
            count += chunk.len();
        }
        let val_mse = if val.is_empty() {
            None
        } else {
            let m = model_of(&params, epoch + 1);
            let inputs: Vec<&SurvivalInput> = val.iter().map(|s| &s.input).collect();
            Some(mse(&m.predict(&inputs)?, &val)?)
        };
        history.push(EpochRecord { train_loss: loss_sum / count as f64, val_mse });
        if let Some(v) = val_mse {
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, epoch + 1, params.clone()));
            } else if epoch + 1 - best.as_ref().unwrap().1 >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, model) = match best {
        Some((_, e, p)) => (e, model_of(&p, e)),
        None => (history.len(), model_of(&params, history.len())),
    };
    Ok(SurvivalFit { model, history, split, best_epoch })
}

/// Writes `id,predicted_days` with days rounded half-up.
pub fn write_predictions_csv<W: std::io::Write>(w: W, rows: &[(String, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["id", "predicted_days"])?;
    for (id, d) in rows {
        wr.write_record([id.as_str(), &super::scale::round_days(*d).to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
