//! Dice, sensitivity, specificity and Hausdorff distance of a shifted
//! prediction against phantom truth.

use tumorseg::metrics::{aggregate, evaluate_case, write_report_csv, Region};
use tumorseg::testkit::{generate_dataset, DatasetSpec};
use tumorseg::volume::{Volume, VolumeKind};

fn main() -> tumorseg::Result<()> {
    let case = generate_dataset(1, 3, &DatasetSpec::cube(32))?.remove(0);
    let truth = case.truth().expect("phantom truth");
    // the truth moved two voxels along x
    let shifted = Volume::from_fn(truth.dims(), truth.spacing(), VolumeKind::Label, |x, y, z| {
        if x >= 2 { truth.get(x - 2, y, z) } else { 0.0 }
    })?;
    let report = evaluate_case(case.id(), &shifted, truth, 95.0)?;
    for r in Region::ALL {
        let m = report.region(r);
        println!(
            "{r}: dice {:.3}, sensitivity {:.3}, HD95 {:.1} mm",
            m.dice,
            m.sensitivity.unwrap_or(f64::NAN),
            m.hausdorff_mm.unwrap_or(f64::NAN)
        );
    }
    let summary = aggregate(std::slice::from_ref(&report))?;
    write_report_csv(std::io::stdout(), &[report], &summary)?;
    Ok(())
}
