use std::fmt;
use std::io::Write;

use super::{confusion, hausdorff, Region, RegionMaskSet};
use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flag {
    /// Prediction and truth both empty; Dice set to 1.
    BothEmpty,
    /// Truth empty; sensitivity undefined.
    EmptyTruth,
    /// Truth fills the grid; specificity undefined.
    FullTruth,
    /// One side has no surface; Hausdorff undefined.
    NoSurface,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::BothEmpty => "both_empty",
            Flag::EmptyTruth => "empty_truth",
            Flag::FullTruth => "full_truth",
            Flag::NoSurface => "no_surface",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionMetrics {
    pub dice: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// Percentile Hausdorff distance (mm).
    pub hausdorff_mm: Option<f64>,
    /// Classical (maximum) Hausdorff distance (mm).
    pub hausdorff_max_mm: Option<f64>,
    pub flags: Vec<Flag>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub case_id: String,
    pub percentile: f64,
    /// Indexed by `Region as usize`.
    pub regions: [RegionMetrics; 3],
}

impl MetricsReport {
    pub fn region(&self, r: Region) -> &RegionMetrics {
        &self.regions[r as usize]
    }

    /// Compares two region-mask sets.
    pub fn from_masks(case_id: &str, pred: &RegionMaskSet, truth: &RegionMaskSet, percentile: f64) -> Result<Self> {
        let mut out = Vec::with_capacity(3);
        for r in Region::ALL {
            let (p, t) = (pred.get(r), truth.get(r));
            let c = confusion(p, t)?;
            let d = c.dice();
            let mut flags = Vec::new();
            if d.both_empty {
                flags.push(Flag::BothEmpty);
            }
            let sensitivity = c.sensitivity();
            if sensitivity.is_none() {
                flags.push(Flag::EmptyTruth);
            }
            let specificity = c.specificity();
            if specificity.is_none() {
                flags.push(Flag::FullTruth);
            }
            let h = hausdorff(p, t, percentile)?;
            if h.is_none() {
                flags.push(Flag::NoSurface);
            }
            out.push(RegionMetrics {
                dice: d.value,
                sensitivity,
                specificity,
                hausdorff_mm: h.map(|h| h.percentile),
                hausdorff_max_mm: h.map(|h| h.max),
                flags,
            });
        }
        Ok(MetricsReport { case_id: case_id.to_owned(), percentile, regions: out.try_into().unwrap() })
    }
}

/// All four criteria per region for a predicted and a reference label volume.
pub fn evaluate_case(case_id: &str, pred: &Volume, truth: &Volume, percentile: f64) -> Result<MetricsReport> {
    pred.require_same_geometry(truth, "prediction vs truth")?;
    let p = super::region_masks(pred)?;
    let t = super::region_masks(truth)?;
    MetricsReport::from_masks(case_id, &p, &t, percentile)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Number of defined values in the mean.
    pub count: usize,
    pub undefined: usize,
}

impl MetricSummary {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut count, mut undefined) = (0.0, 0, 0);
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    count += 1
                }
                None => undefined += 1,
            }
        }
        MetricSummary { mean: (count > 0).then(|| sum / count as f64), count, undefined }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["dice", "sensitivity", "specificity", "hausdorff_mm"];

/// Cohort means per region and metric; undefined entries are excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// `[region][metric]`, metrics in [`METRIC_NAMES`] order.
    pub entries: [[MetricSummary; 4]; 3],
}

impl Summary {
    pub fn get(&self, r: Region, metric: &str) -> Option<&MetricSummary> {
        let m = METRIC_NAMES.iter().position(|&n| n == metric)?;
        Some(&self.entries[r as usize][m])
    }
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no reports to aggregate".into()));
    }
    let entries = Region::ALL.map(|r| {
        let rm = || reports.iter().map(move |rep| rep.region(r));
        [
            MetricSummary::of(rm().map(|m| Some(m.dice))),
            MetricSummary::of(rm().map(|m| m.sensitivity)),
            MetricSummary::of(rm().map(|m| m.specificity)),
            MetricSummary::of(rm().map(|m| m.hausdorff_mm)),
        ]
    });
    Ok(Summary { entries })
}

fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
}

/// Per-case rows followed by a `# summary` block. Values carry 4 decimals;
/// undefined values are written as `NA`.
pub fn write_report_csv<W: Write>(out: W, reports: &[MetricsReport], summary: &Summary) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["case_id", "region", "dice", "sensitivity", "specificity", "hausdorff_mm", "flags"])?;
    for rep in reports {
        for r in Region::ALL {
            let m = rep.region(r);
            let flags: Vec<String> = m.flags.iter().map(Flag::to_string).collect();
            w.write_record([
                rep.case_id.as_str(),
                r.name(),
                &fmt4(Some(m.dice)),
                &fmt4(m.sensitivity),
                &fmt4(m.specificity),
                &fmt4(m.hausdorff_mm),
                &flags.join(";"),
            ])?;
        }
    }
    w.write_record(["# summary"])?;
    w.write_record(["region", "metric", "mean", "count", "undefined"])?;
    for r in Region::ALL {
        for (name, s) in METRIC_NAMES.iter().zip(&summary.entries[r as usize]) {
            w.write_record([r.name(), name, &fmt4(s.mean), &s.count.to_string(), &s.undefined.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeKind;

    fn labels(v: &[f32]) -> Volume {
        Volume::new([v.len(), 1, 1], [1.0; 3], v.to_vec(), VolumeKind::Label).unwrap()
    }

    #[test]
    fn identical_prediction_is_perfect() {
        let t = labels(&[0.0, 1.0, 2.0, 4.0, 0.0]);
        let r = evaluate_case("a", &t, &t, 95.0).unwrap();
        for m in &r.regions {
            assert_eq!(m.dice, 1.0);
            assert_eq!(m.sensitivity, Some(1.0));
            assert_eq!(m.specificity, Some(1.0));
            assert_eq!(m.hausdorff_mm, Some(0.0));
        }
    }

    #[test]
    fn empty_prediction() {
        let t = labels(&[0.0, 2.0, 2.0, 0.0]);
        let p = labels(&[0.0; 4]);
        let r = evaluate_case("a", &p, &t, 95.0).unwrap();
        assert_eq!(r.region(Region::Wt).dice, 0.0);
        assert!(r.region(Region::Wt).flags.contains(&Flag::NoSurface));
        assert_eq!(r.region(Region::Ct).flags, vec![Flag::BothEmpty, Flag::EmptyTruth, Flag::NoSurface]);
    }

    #[test]
    fn aggregate_means_and_counts() {
        let t = labels(&[0.0, 1.0, 1.0, 0.0]);
        let a = evaluate_case("a", &labels(&[0.0, 1.0, 0.0, 0.0]), &t, 95.0).unwrap();
        let b = evaluate_case("b", &t, &t, 95.0).unwrap();
        let s = aggregate(&[a.clone(), b]).unwrap();
        let d = s.get(Region::Wt, "dice").unwrap();
        assert!((d.mean.unwrap() - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        let single = aggregate(&[a.clone()]).unwrap();
        assert_eq!(single.get(Region::Wt, "dice").unwrap().mean, Some(a.region(Region::Wt).dice));
        assert_eq!(s.get(Region::Et, "sensitivity").unwrap().undefined, 2);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let t = labels(&[0.0, 4.0]);
        let r = evaluate_case("c1", &t, &t, 95.0).unwrap();
        let s = aggregate(std::slice::from_ref(&r)).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[r], &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "case_id,region,dice,sensitivity,specificity,hausdorff_mm,flags");
        assert_eq!(lines[1], "c1,WT,1.0000,1.0000,1.0000,0.0000,");
        assert_eq!(lines[4], "# summary");
        assert_eq!(lines.len(), 1 + 3 + 2 + 12);
    }
}
