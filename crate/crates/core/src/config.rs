//! Pipeline configuration: `key = value` lines under `[section]` headers.
//!
//! Keys before the first header belong to the top level (`seed`). Every key
//! has a default; unknown sections and keys are rejected. [`PipelineConfig::to_ini`]
//! writes the fully resolved configuration and parses back to the same value.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_PERCENTILE;
use crate::preprocess::PreprocessConfig;
use crate::segnet::{DiscriminatorConfig, GeneratorConfig, SegTrainConfig};
use crate::survival::{SlicePolicy, SplitSpec, SurvivalTrainConfig, DEFAULT_TOLERANCE_DAYS};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsConfig {
    pub hausdorff_percentile: f64,
    pub tolerance_days: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { hausdorff_percentile: DEFAULT_PERCENTILE, tolerance_days: DEFAULT_TOLERANCE_DAYS }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathsConfig {
    /// Clinical CSV name inside a data directory.
    pub clinical_csv: String,
    /// Checkpoint file name inside a model directory.
    pub checkpoint: String,
    pub loss_log: String,
    /// Steps between intermediate checkpoints; 0 saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            clinical_csv: "clinical.csv".into(),
            checkpoint: "model.ckpt".into(),
            loss_log: "losses.csv".into(),
            checkpoint_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalSection {
    pub train: SurvivalTrainConfig,
    pub split: SplitSpec,
    pub slice_policy: SlicePolicy,
}

impl Default for SurvivalSection {
    fn default() -> Self {
        SurvivalSection { train: SurvivalTrainConfig::default(), split: SplitSpec::default(), slice_policy: SlicePolicy::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub segnet: SegTrainConfig,
    pub survival: SurvivalSection,
    pub metrics: MetricsConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut c = PipelineConfig {
            seed: 1,
            preprocess: PreprocessConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            segnet: SegTrainConfig::default(),
            survival: SurvivalSection::default(),
            metrics: MetricsConfig::default(),
            paths: PathsConfig::default(),
        };
        c.apply_seed();
        c
    }
}

fn parse<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e| Error::Config(format!("[{section}] {key} = {v:?}: {e}")))
}

fn policy_name(p: SlicePolicy) -> &'static str {
    match p {
        SlicePolicy::MaxWtArea => "max_wt_area",
        SlicePolicy::Central => "central",
    }
}

impl PipelineConfig {
    /// Copies the top-level seed into every seeded component.
    fn apply_seed(&mut self) {
        self.segnet.seed = self.seed;
        self.survival.train.seed = self.seed;
        self.survival.split.seed = self.seed;
    }

    /// Sets one key. `section` is `""` for the top level.
    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        macro_rules! p {
            () => {
                parse(section, key, v)?
            };
        }
        let (pre, g, d, s, sv, m, pa) = (
            &mut self.preprocess,
            &mut self.generator,
            &mut self.discriminator,
            &mut self.segnet,
            &mut self.survival,
            &mut self.metrics,
            &mut self.paths,
        );
        match (section, key) {
            ("", "seed") => {
                self.seed = p!();
                self.apply_seed();
            }
            ("preprocess", "bias_correction") => pre.bias_correction = p!(),
            ("preprocess", "bias_order") => pre.bias_order = p!(),
            ("preprocess", "histogram_matching") => pre.histogram_matching = p!(),
            ("preprocess", "bins") => pre.bins = p!(),
            ("preprocess", "foreground_threshold") => pre.foreground_threshold = p!(),
            ("segnet", "depth") => g.depth = p!(),
            ("segnet", "base_channels") => g.base_channels = p!(),
            ("segnet", "d_layers") => d.layers = p!(),
            ("segnet", "d_base_channels") => d.base_channels = p!(),
            ("segnet", "steps") => s.steps = p!(),
            ("segnet", "batch_size") => s.batch_size = p!(),
            ("segnet", "ref_size") => s.ref_size = p!(),
            ("segnet", "lr_g") => s.lr_g = p!(),
            ("segnet", "lr_d") => s.lr_d = p!(),
            ("segnet", "beta1") => s.beta1 = p!(),
            ("segnet", "beta2") => s.beta2 = p!(),
            ("segnet", "pixel_weight") => s.pixel_weight = p!(),
            ("segnet", "crop_background") => s.crop_background = p!(),
            ("survival", "blocks") => sv.train.net.blocks = p!(),
            ("survival", "base_channels") => sv.train.net.base_channels = p!(),
            ("survival", "clinical_hidden") => sv.train.net.clinical_hidden = p!(),
            ("survival", "fc_hidden") => sv.train.net.fc_hidden = p!(),
            ("survival", "epochs") => sv.train.epochs = p!(),
            ("survival", "batch_size") => sv.train.batch_size = p!(),
            ("survival", "ref_size") => sv.train.ref_size = p!(),
            ("survival", "lr") => sv.train.lr = p!(),
            ("survival", "beta1") => sv.train.beta1 = p!(),
            ("survival", "beta2") => sv.train.beta2 = p!(),
            ("survival", "patience") => sv.train.patience = p!(),
            ("survival", "flip") => sv.train.flip = p!(),
            ("survival", "rescale") => sv.train.rescale = p!(),
            ("survival", "slice_policy") => sv.slice_policy = p!(),
            ("survival", "train_fraction") => sv.split.train = p!(),
            ("survival", "val_fraction") => sv.split.val = p!(),
            ("survival", "test_fraction") => sv.split.test = p!(),
            ("metrics", "hausdorff_percentile") => m.hausdorff_percentile = p!(),
            ("metrics", "tolerance_days") => m.tolerance_days = p!(),
            ("paths", "clinical_csv") => pa.clinical_csv = v.to_string(),
            ("paths", "checkpoint") => pa.checkpoint = v.to_string(),
            ("paths", "loss_log") => pa.loss_log = v.to_string(),
            ("paths", "checkpoint_every") => pa.checkpoint_every = p!(),
            _ if !["", "preprocess", "segnet", "survival", "metrics", "paths"].contains(&section) => {
                return Err(Error::Config(format!("unknown section [{section}]")));
            }
            _ => {
                let at = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
                return Err(Error::Config(format!("unknown key {key:?} in {at}")));
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let (pre, g, d, s, sv, m, pa) =
            (&self.preprocess, &self.generator, &self.discriminator, &self.segnet, &self.survival, &self.metrics, &self.paths);
        let f = |x: f64| format!("{x:?}");
        vec![
            ("", "seed", self.seed.to_string()),
            ("preprocess", "bias_correction", pre.bias_correction.to_string()),
            ("preprocess", "bias_order", pre.bias_order.to_string()),
            ("preprocess", "histogram_matching", pre.histogram_matching.to_string()),
            ("preprocess", "bins", pre.bins.to_string()),
            ("preprocess", "foreground_threshold", format!("{:?}", pre.foreground_threshold)),
            ("segnet", "depth", g.depth.to_string()),
            ("segnet", "base_channels", g.base_channels.to_string()),
            ("segnet", "d_layers", d.layers.to_string()),
            ("segnet", "d_base_channels", d.base_channels.to_string()),
            ("segnet", "steps", s.steps.to_string()),
            ("segnet", "batch_size", s.batch_size.to_string()),
            ("segnet", "ref_size", s.ref_size.to_string()),
            ("segnet", "lr_g", f(s.lr_g)),
            ("segnet", "lr_d", f(s.lr_d)),
            ("segnet", "beta1", f(s.beta1)),
            ("segnet", "beta2", f(s.beta2)),
            ("segnet", "pixel_weight", f(s.pixel_weight)),
            ("segnet", "crop_background", s.crop_background.to_string()),
            ("survival", "blocks", sv.train.net.blocks.to_string()),
            ("survival", "base_channels", sv.train.net.base_channels.to_string()),
            ("survival", "clinical_hidden", sv.train.net.clinical_hidden.to_string()),
            ("survival", "fc_hidden", sv.train.net.fc_hidden.to_string()),
            ("survival", "epochs", sv.train.epochs.to_string()),
            ("survival", "batch_size", sv.train.batch_size.to_string()),
            ("survival", "ref_size", sv.train.ref_size.to_string()),
            ("survival", "lr", f(sv.train.lr)),
            ("survival", "beta1", f(sv.train.beta1)),
            ("survival", "beta2", f(sv.train.beta2)),
            ("survival", "patience", sv.train.patience.to_string()),
            ("survival", "flip", sv.train.flip.to_string()),
            ("survival", "rescale", sv.train.rescale.to_string()),
            ("survival", "slice_policy", policy_name(sv.slice_policy).to_string()),
            ("survival", "train_fraction", f(sv.split.train)),
            ("survival", "val_fraction", f(sv.split.val)),
            ("survival", "test_fraction", f(sv.split.test)),
            ("metrics", "hausdorff_percentile", f(m.hausdorff_percentile)),
            ("metrics", "tolerance_days", f(m.tolerance_days)),
            ("paths", "clinical_csv", pa.clinical_csv.clone()),
            ("paths", "checkpoint", pa.checkpoint.clone()),
            ("paths", "loss_log", pa.loss_log.clone()),
            ("paths", "checkpoint_every", pa.checkpoint_every.to_string()),
        ]
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut section = String::new();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", n + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| at(format!("malformed section header {line:?}")))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert((section.clone(), k.to_string())) {
                return Err(at(format!("duplicate key {k:?}")));
            }
            cfg.set(&section, k, v).map_err(|e| at(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// `section.key=value` override, as given on the command line.
    pub fn set_dotted(&mut self, assignment: &str) -> Result<()> {
        let (lhs, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let (section, key) = lhs.trim().split_once('.').unwrap_or(("", lhs.trim()));
        self.set(section, key, v.trim())
    }

    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key, value) in self.entries() {
            if section != current {
                out.push_str(&format!("\n[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Writes the resolved configuration to `dir/config.ini`.
    pub fn echo(&self, dir: impl AsRef<Path>) -> Result<()> {
        std::fs::create_dir_all(dir.as_ref())?;
        std::fs::write(dir.as_ref().join("config.ini"), self.to_ini())?;
        Ok(())
    }
}
