//! Survival regression from the largest-tumor axial slice plus age, against
//! the predict-the-mean baseline.
//!
//! cargo run --release --example survival -- 100

use tumorseg::survival::{accuracy, train_survival, SlicePolicy, SplitSpec, SurvivalSample, SurvivalTrainConfig, DEFAULT_TOLERANCE_DAYS};
use tumorseg::testkit::{generate_dataset, DatasetSpec};

fn main() -> tumorseg::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let cases = generate_dataset(30, 11, &DatasetSpec::cube(32))?;
    let samples = cases
        .iter()
        .map(|c| SurvivalSample::from_case(c, None, SlicePolicy::MaxWtArea))
        .collect::<tumorseg::Result<Vec<_>>>()?;

    let fit = train_survival(&samples, &SplitSpec::default(), &SurvivalTrainConfig { epochs, ..Default::default() })?;
    println!("best epoch {} of {}", fit.best_epoch, fit.history.len());

    let pick = |idx: &[usize]| idx.iter().map(|&i| &samples[i]).collect::<Vec<_>>();
    let (train, test) = (pick(&fit.split.train), pick(&fit.split.test));
    let truth: Vec<f64> = test.iter().map(|s| s.survival_days.expect("planted survival")).collect();
    let pred = fit.model.predict_days(&test.iter().map(|s| &s.input).collect::<Vec<_>>())?;
    let mean = train.iter().filter_map(|s| s.survival_days).sum::<f64>() / train.len() as f64;
    for ((s, p), t) in test.iter().zip(&pred).zip(&truth) {
        println!("{}: predicted {p:.0} days, planted {t:.0}", s.id);
    }
    println!(
        "accuracy within {DEFAULT_TOLERANCE_DAYS} days: {:.2} (mean baseline {:.2})",
        accuracy(&pred, &truth, DEFAULT_TOLERANCE_DAYS)?,
        accuracy(&vec![mean; truth.len()], &truth, DEFAULT_TOLERANCE_DAYS)?
    );
    Ok(())
}
