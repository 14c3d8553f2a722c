//! Bias correction, histogram matching and [-1, 1] normalization fitted on a
//! few training phantoms and applied to an unseen one.

use tumorseg::preprocess::{fit_bias, PreprocessConfig, Preprocessor};
use tumorseg::testkit::{generate_dataset, DatasetSpec};
use tumorseg::volume::Modality;

fn main() -> tumorseg::Result<()> {
    let cases = generate_dataset(5, 2, &DatasetSpec::cube(32))?;
    let (train, unseen) = cases.split_at(4);

    let flair = unseen[0].modality(Modality::Flair);
    let field = fit_bias(flair, 2, 0.0)?;
    println!("unseen FLAIR: largest fitted log-bias coefficient {:.3}", field.max_nonconstant());

    let (pre, reports) = Preprocessor::fit(train, PreprocessConfig::default())?;
    for (_, r) in &reports {
        println!("{}: bias orders {:?}", r.case_id, r.bias_orders);
    }
    let (out, _) = pre.apply(&unseen[0])?;
    for m in Modality::ALL {
        let (lo, hi) = out.modality(m).min_max();
        println!("{m}: [{lo:.3}, {hi:.3}]");
    }
    Ok(())
}
