//! Region groupings and the overlap / surface-distance criteria.

mod hausdorff;
mod overlap;
mod regions;
mod report;

pub use hausdorff::{distance_transform, hausdorff, surface, HausdorffPair};
pub use overlap::{confusion, dice, sensitivity, specificity, Confusion, DiceScore};
pub use regions::{region_masks, Mask, Region, RegionMaskSet};
pub use report::{aggregate, evaluate_case, write_report_csv, Flag, MetricSummary, MetricsReport, RegionMetrics, Summary};

/// Default Hausdorff percentile.
pub const DEFAULT_PERCENTILE: f64 = 95.0;
