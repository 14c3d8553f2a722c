//! Command-line front end. [`run`] parses arguments, dispatches to a
//! subcommand and maps errors to exit codes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_case, write_report_csv};
use crate::preprocess::Preprocessor;
use crate::segnet::{segment_case, LossLog, SegDataset, SegModel, Trainer};
use crate::survival::{
    accuracy, baseline_features, polynomial_baseline, train_survival, unscale_survival, write_predictions_csv, SurvivalModel,
    SurvivalSample,
};
use crate::testkit::{generate_dataset, write_dataset, DatasetSpec};
use crate::verify::{gradient_suite, GRADCHECK_TOL};
use crate::volume::{load_cases, load_patient_case, read_clinical_csv, read_volume, write_volume, ClinicalRecord, PatientCase, VolumeKind};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_GRADCHECK: i32 = 5;

pub const SURVIVAL_CHECKPOINT: &str = "survival.ckpt";

#[derive(Parser, Debug)]
#[command(name = "tumorseg", version, about = "Brain tumor segmentation and survival prediction on multimodal MR volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Pipeline config file (`key = value` under `[section]` headers).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set segnet.steps=200`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
                e => e,
            })?,
            None => PipelineConfig::default(),
        };
        for o in &self.overrides {
            cfg.set_dotted(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic phantom dataset with a clinical CSV.
    Phantom {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Cube side in voxels.
        #[arg(long, default_value_t = 64)]
        dims: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Bias correction, histogram matching and normalization of every case.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Adversarial segmentation training with periodic checkpoints.
    TrainSeg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Predict label volumes for one case directory or every case under a root.
    Segment {
        /// Checkpoint file, or a training output directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Dice, sensitivity, specificity and Hausdorff distance per region.
    Evaluate {
        /// A label file, or a directory of `<id>_pred.nii` files.
        #[arg(long)]
        pred: PathBuf,
        /// A label file, a case directory, or a dataset root.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the two-pathway survival network and report test accuracy.
    TrainSurvival {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Segmentation checkpoint for cases without ground truth.
        #[arg(long)]
        seg_model: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Predict survival days as `id,predicted_days`.
    PredictSurvival {
        /// Checkpoint file, or a survival training output directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        case: PathBuf,
        /// Clinical CSV; defaults to the one next to the case(s).
        #[arg(long)]
        clinical: Option<PathBuf>,
        #[arg(long)]
        seg_model: Option<PathBuf>,
        /// Output directory; predictions go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finite-difference check of every operation and network.
    Gradcheck {
        #[arg(long, default_value_t = 25)]
        seeds: u64,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::TrainingDiverged { .. } | Error::SurvivalDiverged { .. } => EXIT_DIVERGED,
        Error::Io(_)
        | Error::Parse(_)
        | Error::UnsupportedFormat(_)
        | Error::InvalidHeader(_)
        | Error::InvalidLabel(_)
        | Error::NonFinite(_)
        | Error::MissingModality { .. }
        | Error::GeometryMismatch(_)
        | Error::EmptyForeground
        | Error::EmptyInput(_)
        | Error::MissingClinical(_)
        | Error::Csv(_) => EXIT_DATA,
        _ => EXIT_OTHER,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Phantom { n, seed, dims, out, cfg } => phantom(n, seed, dims, &out, &cfg.resolve()?),
        Command::Preprocess { input, out, cfg } => preprocess(&input, &out, &cfg.resolve()?),
        Command::TrainSeg { data, out, resume, cfg } => train_seg(&data, &out, resume, &cfg.resolve()?),
        Command::Segment { model, case, out, cfg } => segment(&model, &case, &out, &cfg.resolve()?),
        Command::Evaluate { pred, truth, out, cfg } => evaluate(&pred, &truth, &out, &cfg.resolve()?),
        Command::TrainSurvival { data, out, seg_model, cfg } => train_surv(&data, &out, seg_model.as_deref(), &cfg.resolve()?),
        Command::PredictSurvival { model, case, clinical, seg_model, out, cfg } => {
            predict_surv(&model, &case, clinical.as_deref(), seg_model.as_deref(), out.as_deref(), &cfg.resolve()?)
        }
        Command::Gradcheck { seeds } => gradcheck(seeds),
    }
}

fn phantom(n: usize, seed: u64, dims: usize, out: &Path, cfg: &PipelineConfig) -> Result<i32> {
    let spec = DatasetSpec::cube(dims);
    let cases = generate_dataset(n, seed, &spec)?;
    write_dataset(&cases, out)?;
    cfg.echo(out)?;
    eprintln!("wrote {n} phantom cases to {}", out.display());
    Ok(0)
}

/// A directory holding modality files is one case; otherwise every
/// subdirectory is.
fn is_case_dir(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|id| p.join(format!("{id}_t1.nii")).is_file())
}

fn clinical_for(root: &Path, cfg: &PipelineConfig, explicit: Option<&Path>) -> Result<Option<BTreeMap<String, ClinicalRecord>>> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => root.join(&cfg.paths.clinical_csv),
    };
    if explicit.is_some() || path.is_file() {
        Ok(Some(read_clinical_csv(path)?))
    } else {
        Ok(None)
    }
}

/// Cases under `path` (a single case directory or a root), with clinical
/// records from `explicit` or the CSV next to them.
fn load_any(path: &Path, cfg: &PipelineConfig, explicit: Option<&Path>) -> Result<Vec<PatientCase>> {
    if is_case_dir(path) {
        let parent = path.parent().unwrap_or(Path::new("."));
        let clinical = clinical_for(parent, cfg, explicit)?;
        let id = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let rec = clinical.as_ref().and_then(|c| c.get(id).cloned());
        Ok(vec![load_patient_case(path, rec)?])
    } else {
        let clinical = clinical_for(path, cfg, explicit)?;
        load_cases(path, clinical.as_ref())
    }
}

fn preprocess(input: &Path, out: &Path, cfg: &PipelineConfig) -> Result<i32> {
    let cases = load_any(input, cfg, None)?;
    let (pre, done) = Preprocessor::fit(&cases, cfg.preprocess.clone())?;
    std::fs::create_dir_all(out)?;
    let mut report = csv::Writer::from_path(out.join("preprocess_report.csv"))?;
    report.write_record(["case_id", "bias_orders", "constant_histogram", "constant_intensity"])?;
    let mut processed = Vec::with_capacity(done.len());
    for (case, r) in done {
        let join = |v: &[crate::volume::Modality]| v.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";");
        let orders = r.bias_orders.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(";");
        report.write_record([r.case_id.as_str(), &orders, &join(&r.constant_histogram), &join(&r.constant_intensity)])?;
        processed.push(case);
    }
    report.flush()?;
    write_dataset(&processed, out)?;
    if pre.references.is_some() {
        pre.save_references(out)?;
    }
    cfg.echo(out)?;
    eprintln!("preprocessed {} cases into {}", processed.len(), out.display());
    Ok(0)
}

fn train_seg(data: &Path, out: &Path, resume: bool, cfg: &PipelineConfig) -> Result<i32> {
    let cases = load_any(data, cfg, None)?;
    let data = SegDataset::new(cases)?;
    std::fs::create_dir_all(out)?;
    let ckpt = out.join(&cfg.paths.checkpoint);
    let log_path = out.join(&cfg.paths.loss_log);
    let mut trainer = if resume && ckpt.is_file() {
        let mut t = Trainer::load(&ckpt)?;
        t.config.steps = cfg.segnet.steps;
        t
    } else {
        Trainer::new(&data, cfg.generator, cfg.discriminator, cfg.segnet.clone())?
    };
    // the log always mirrors the checkpointed history
    if log_path.exists() {
        std::fs::remove_file(&log_path)?;
    }
    let mut log = LossLog::open(&log_path)?;
    for (i, r) in trainer.history().iter().enumerate() {
        log.append(i as u64, r)?;
    }
    cfg.echo(out)?;
    let every = cfg.paths.checkpoint_every;
    let total = trainer.config.steps;
    while trainer.step() < total {
        let until = if every == 0 { total } else { (trainer.step() / every + 1) * every };
        let mut log_err = None;
        let res = trainer.train(&data, Some(until), |step, r| {
            if let Err(e) = log.append(step, r) {
                log_err.get_or_insert(e);
            }
            if step % 10 == 0 {
                eprintln!("step {step}: d_loss {:.4} g_loss {:.4} train WT dice {:.3}", r.d_loss, r.g_loss, r.train_dice_wt);
            }
        });
        if let Some(e) = log_err {
            return Err(e);
        }
        if let Err(e) = res {
            trainer.save(&ckpt)?;
            return Err(e);
        }
        trainer.save(&ckpt)?;
    }
    eprintln!("trained {} steps; checkpoint {}", trainer.step(), ckpt.display());
    Ok(0)
}

fn resolve_model(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn segment(model: &Path, case: &Path, out: &Path, cfg: &PipelineConfig) -> Result<i32> {
    let mut m = SegModel::load(resolve_model(model, &cfg.paths.checkpoint))?;
    let cases = load_any(case, cfg, None)?;
    std::fs::create_dir_all(out)?;
    for c in &cases {
        let (_, labels) = segment_case(&mut m, c)?;
        write_volume(&labels, out.join(format!("{}_pred.nii", c.id())))?;
        eprintln!("segmented {}", c.id());
    }
    cfg.echo(out)?;
    Ok(0)
}

fn stem_id(p: &Path) -> Option<String> {
    let stem = p.file_name()?.to_str()?.strip_suffix(".nii")?;
    Some(stem.strip_suffix("_pred").or_else(|| stem.strip_suffix("_seg")).unwrap_or(stem).to_string())
}

/// Truth label file for `id` under a file, case directory or dataset root.
fn truth_file(truth: &Path, id: &str) -> PathBuf {
    if truth.is_file() {
        truth.to_path_buf()
    } else if is_case_dir(truth) {
        let own = truth.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        truth.join(format!("{own}_seg.nii"))
    } else {
        truth.join(id).join(format!("{id}_seg.nii"))
    }
}

fn evaluate(pred: &Path, truth: &Path, out: &Path, cfg: &PipelineConfig) -> Result<i32> {
    let mut preds: Vec<(String, PathBuf)> = if pred.is_dir() {
        let mut v = Vec::new();
        for e in std::fs::read_dir(pred)? {
            let p = e?.path();
            if let Some(id) = p.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix("_pred.nii")) {
                v.push((id.to_string(), p));
            }
        }
        v
    } else {
        let id = stem_id(pred).ok_or_else(|| Error::InvalidParameter(format!("{} is not a .nii file", pred.display())))?;
        vec![(id, pred.to_path_buf())]
    };
    preds.sort();
    if preds.is_empty() {
        return Err(Error::EmptyInput(format!("no predictions under {}", pred.display())));
    }
    let mut reports = Vec::with_capacity(preds.len());
    for (id, p) in &preds {
        let pv = read_volume(p, VolumeKind::Label)?;
        let tv = read_volume(truth_file(truth, id), VolumeKind::Label)?;
        reports.push(evaluate_case(id, &pv, &tv, cfg.metrics.hausdorff_percentile)?);
    }
    let summary = aggregate(&reports)?;
    std::fs::create_dir_all(out)?;
    write_report_csv(std::fs::File::create(out.join("report.csv"))?, &reports, &summary)?;
    cfg.echo(out)?;
    for r in crate::metrics::Region::ALL {
        let d = summary.get(r, "dice").and_then(|m| m.mean);
        eprintln!("{} mean dice {}", r.name(), d.map_or("NA".into(), |v| format!("{v:.4}")));
    }
    Ok(0)
}

fn samples_for(cases: &[PatientCase], seg_model: Option<&Path>, cfg: &PipelineConfig) -> Result<Vec<SurvivalSample>> {
    let mut model = seg_model.map(|p| SegModel::load(resolve_model(p, &cfg.paths.checkpoint))).transpose()?;
    cases
        .iter()
        .map(|c| {
            let predicted = match (&mut model, c.truth()) {
                (Some(m), None) => Some(segment_case(m, c)?.0),
                _ => None,
            };
            SurvivalSample::from_case(c, predicted.as_ref(), cfg.survival.slice_policy)
        })
        .collect()
}

fn train_surv(data: &Path, out: &Path, seg_model: Option<&Path>, cfg: &PipelineConfig) -> Result<i32> {
    let cases = load_any(data, cfg, None)?;
    let samples = samples_for(&cases, seg_model, cfg)?;
    let fit = train_survival(&samples, &cfg.survival.split, &cfg.survival.train)?;
    std::fs::create_dir_all(out)?;
    fit.model.save(out.join(SURVIVAL_CHECKPOINT))?;

    let mut hist = csv::Writer::from_path(out.join("history.csv"))?;
    hist.write_record(["epoch", "train_loss", "val_mse"])?;
    for (i, h) in fit.history.iter().enumerate() {
        hist.write_record([(i + 1).to_string(), format!("{:.8}", h.train_loss), h.val_mse.map_or("NA".into(), |v| format!("{v:.8}"))])?;
    }
    hist.flush()?;

    let mut sorted: Vec<&SurvivalSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut split = csv::Writer::from_path(out.join("split.csv"))?;
    split.write_record(["id", "part"])?;
    for (part, idx) in [("train", &fit.split.train), ("val", &fit.split.val), ("test", &fit.split.test)] {
        for &i in idx.iter() {
            split.write_record([sorted[i].id.as_str(), part])?;
        }
    }
    split.flush()?;

    let pick = |idx: &[usize]| idx.iter().map(|&i| sorted[i]).collect::<Vec<_>>();
    let (train, test) = (pick(&fit.split.train), pick(&fit.split.test));
    let mut summary = format!("best_epoch = {}\nepochs_run = {}\n", fit.best_epoch, fit.history.len());
    if !test.is_empty() {
        let inputs: Vec<_> = test.iter().map(|s| &s.input).collect();
        let pred = fit.model.predict_days(&inputs)?;
        let truth: Vec<f64> = test.iter().map(|s| s.survival_days.ok_or_else(|| Error::MissingClinical(s.id.clone()))).collect::<Result<_>>()?;
        let tol = cfg.metrics.tolerance_days;
        let mean = train.iter().filter_map(|s| s.survival_days).sum::<f64>() / train.len() as f64;
        let feats = |s: &SurvivalSample| -> Result<Vec<f64>> {
            let case = cases.iter().find(|c| c.id() == s.id).expect("sample from case");
            let regions = crate::survival::truth_regions(case);
            let regions = match regions {
                Some(r) => r,
                None => return Err(Error::InvalidParameter(format!("case {} has no regions for the baseline", s.id))),
            };
            Ok(baseline_features(s.input.age as f64, &regions))
        };
        let poly = train
            .iter()
            .map(|s| feats(s))
            .collect::<Result<Vec<_>>>()
            .and_then(|f| {
                let t: Vec<f64> = train.iter().map(|s| s.survival_days.unwrap_or(0.0) / crate::survival::MAX_SURVIVAL_DAYS).collect();
                polynomial_baseline(&f, &t, 1)
            })
            .and_then(|m| test.iter().map(|s| m.predict(&feats(s)?).and_then(unscale_survival)).collect::<Result<Vec<_>>>());
        summary += &format!("test_cases = {}\ntolerance_days = {tol:?}\n", test.len());
        summary += &format!("test_accuracy = {:.4}\n", accuracy(&pred, &truth, tol)?);
        summary += &format!("mean_baseline_accuracy = {:.4}\n", accuracy(&vec![mean; truth.len()], &truth, tol)?);
        if let Ok(p) = poly {
            summary += &format!("linear_baseline_accuracy = {:.4}\n", accuracy(&p, &truth, tol)?);
        }
        let rows: Vec<(String, f64)> = test.iter().zip(&pred).map(|(s, &d)| (s.id.clone(), d)).collect();
        write_predictions_csv(std::fs::File::create(out.join("test_predictions.csv"))?, &rows)?;
    }
    std::fs::write(out.join("summary.txt"), &summary)?;
    cfg.echo(out)?;
    eprint!("{summary}");
    Ok(0)
}

fn predict_surv(
    model: &Path,
    case: &Path,
    clinical: Option<&Path>,
    seg_model: Option<&Path>,
    out: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<i32> {
    let m = SurvivalModel::load(resolve_model(model, SURVIVAL_CHECKPOINT))?;
    let cases = load_any(case, cfg, clinical)?;
    let samples = samples_for(&cases, seg_model, cfg)?;
    let inputs: Vec<_> = samples.iter().map(|s| &s.input).collect();
    let days = m.predict_days(&inputs)?;
    let rows: Vec<(String, f64)> = samples.iter().zip(days).map(|(s, d)| (s.id.clone(), d)).collect();
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_predictions_csv(std::fs::File::create(dir.join("predictions.csv"))?, &rows)?;
            cfg.echo(dir)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_predictions_csv(&mut lock, &rows)?;
            lock.flush()?;
        }
    }
    Ok(0)
}

fn gradcheck(seeds: u64) -> Result<i32> {
    let results = gradient_suite(seeds)?;
    let mut failed = 0;
    for r in &results {
        let ok = r.passes();
        failed += !ok as usize;
        println!("{:<22} worst rel. error {:.2e} (seed {}) {}", r.name, r.worst, r.worst_seed, if ok { "ok" } else { "FAIL" });
    }
    println!("{} checks, {failed} failed, tolerance {GRADCHECK_TOL:e}, {seeds} seeds", results.len());
    Ok(if failed == 0 { 0 } else { EXIT_GRADCHECK })
}
