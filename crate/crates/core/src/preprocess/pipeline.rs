//! The full chain: bias correction, per-modality histogram matching against
//! pooled references, then normalization to `[-1, 1]`.

use std::path::Path;

use super::{
    build_reference_histogram, correct_bias, fit_bias, histogram_match, normalize_intensity, Histogram, NormTarget,
    DEFAULT_BINS,
};
use crate::error::{Error, Result};
use crate::volume::{Modality, PatientCase, Volume};

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub bias_correction: bool,
    pub bias_order: usize,
    pub histogram_matching: bool,
    pub bins: usize,
    pub foreground_threshold: f32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            bias_correction: true,
            bias_order: 2,
            histogram_matching: true,
            bins: DEFAULT_BINS,
            foreground_threshold: 0.0,
        }
    }
}

/// Conditions noticed while preprocessing one case.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreprocessReport {
    pub case_id: String,
    /// Bias order actually fitted per modality (after rank fallback).
    pub bias_orders: Vec<usize>,
    pub constant_histogram: Vec<Modality>,
    pub constant_intensity: Vec<Modality>,
}

/// Fitted per-modality references.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    /// One reference per modality, in [`Modality::ALL`] order.
    pub references: Option<Vec<Histogram>>,
}

fn bias_stage(case: &PatientCase, cfg: &PreprocessConfig) -> Result<(Vec<Volume>, Vec<usize>)> {
    let mut vols = Vec::with_capacity(4);
    let mut orders = Vec::with_capacity(4);
    for m in Modality::ALL {
        let v = case.modality(m);
        if cfg.bias_correction {
            let model = fit_bias(v, cfg.bias_order, cfg.foreground_threshold)?;
            orders.push(model.order());
            vols.push(correct_bias(v, &model)?);
        } else {
            vols.push(v.clone());
        }
    }
    Ok((vols, orders))
}

impl Preprocessor {
    /// Builds references from (bias-corrected) training cases and returns the
    /// processed training cases alongside.
    pub fn fit(cases: &[PatientCase], config: PreprocessConfig) -> Result<(Self, Vec<(PatientCase, PreprocessReport)>)> {
        if cases.is_empty() {
            return Err(Error::EmptyInput("no cases to fit preprocessing on".into()));
        }
        let mut staged = Vec::with_capacity(cases.len());
        for c in cases {
            staged.push(bias_stage(c, &config)?);
        }
        let references = if config.histogram_matching {
            let mut refs = Vec::with_capacity(4);
            for m in 0..4 {
                let vols: Vec<&Volume> = staged.iter().map(|(v, _)| &v[m]).collect();
                refs.push(build_reference_histogram(&vols, config.bins, config.foreground_threshold)?);
            }
            Some(refs)
        } else {
            None
        };
        let pre = Preprocessor { config, references };
        let mut out = Vec::with_capacity(cases.len());
        for (c, (vols, orders)) in cases.iter().zip(staged) {
            out.push(pre.finish(c, vols, orders)?);
        }
        Ok((pre, out))
    }

    pub fn apply(&self, case: &PatientCase) -> Result<(PatientCase, PreprocessReport)> {
        let (vols, orders) = bias_stage(case, &self.config)?;
        self.finish(case, vols, orders)
    }

    fn finish(&self, case: &PatientCase, vols: Vec<Volume>, orders: Vec<usize>) -> Result<(PatientCase, PreprocessReport)> {
        let mut report = PreprocessReport { case_id: case.id().to_owned(), bias_orders: orders, ..Default::default() };
        let mut out = Vec::with_capacity(4);
        for (k, v) in vols.into_iter().enumerate() {
            let m = Modality::ALL[k];
            let v = match &self.references {
                Some(refs) => {
                    let r = histogram_match(&v, &refs[k], self.config.foreground_threshold)?;
                    if r.constant_input {
                        report.constant_histogram.push(m);
                    }
                    r.volume
                }
                None => v,
            };
            let n = normalize_intensity(&v, NormTarget::Symmetric)?;
            if n.constant_input {
                report.constant_intensity.push(m);
            }
            out.push(n.volume);
        }
        let case = case.with_modalities(out.try_into().expect("four modalities"))?;
        Ok((case, report))
    }

    /// Writes `reference_<modality>.csv` files into `dir`.
    pub fn save_references(&self, dir: impl AsRef<Path>) -> Result<()> {
        if let Some(refs) = &self.references {
            std::fs::create_dir_all(dir.as_ref())?;
            for (m, h) in Modality::ALL.iter().zip(refs) {
                std::fs::write(dir.as_ref().join(format!("reference_{}.csv", m.suffix())), h.to_csv())?;
            }
        }
        Ok(())
    }

    /// Loads references written by [`save_references`](Self::save_references).
    pub fn load(dir: impl AsRef<Path>, config: PreprocessConfig) -> Result<Self> {
        let references = if config.histogram_matching {
            let mut refs = Vec::with_capacity(4);
            for m in Modality::ALL {
                let p = dir.as_ref().join(format!("reference_{}.csv", m.suffix()));
                refs.push(Histogram::from_csv(&std::fs::read_to_string(&p)?)?);
            }
            Some(refs)
        } else {
            None
        };
        Ok(Preprocessor { config, references })
    }
}

/// Preprocesses one case on its own, using itself as the histogram reference.
pub fn preprocess_case(case: &PatientCase, config: &PreprocessConfig) -> Result<(PatientCase, PreprocessReport)> {
    let (_, mut out) = Preprocessor::fit(std::slice::from_ref(case), config.clone())?;
    Ok(out.remove(0))
}
