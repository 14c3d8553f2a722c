//! Generates a small phantom cohort and writes it in the on-disk layout the
//! CLI reads: one directory per case plus `clinical.csv`.
//!
//! cargo run --example phantom_dataset -- /tmp/phantoms

use tumorseg::testkit::{generate_dataset, write_dataset, DatasetSpec};
use tumorseg::volume::Modality;

fn main() -> tumorseg::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "phantoms".into());
    let cases = generate_dataset(4, 1, &DatasetSpec::cube(32))?;
    for c in &cases {
        let clin = c.clinical().expect("phantoms carry clinical data");
        let (lo, hi) = c.modality(Modality::Flair).min_max();
        println!(
            "{}: dims {:?}, FLAIR range [{lo:.1}, {hi:.1}], age {:.0}, survival {:?} days",
            c.id(),
            c.dims(),
            clin.age_years(),
            clin.survival_days().map(|d| d.round())
        );
    }
    write_dataset(&cases, &out)?;
    println!("wrote {} cases to {out}", cases.len());
    Ok(())
}
