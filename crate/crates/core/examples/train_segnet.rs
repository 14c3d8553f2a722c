//! Adversarial segmentation training on small phantoms, a checkpoint round
//! trip, and three-axis inference on a held-out case.
//!
//! cargo run --release --example train_segnet -- 60

use tumorseg::metrics::{evaluate_case, Region};
use tumorseg::segnet::{segment_case, DiscriminatorConfig, GeneratorConfig, SegDataset, SegTrainConfig, Trainer};
use tumorseg::testkit::{generate_dataset, DatasetSpec};

fn main() -> tumorseg::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let mut cases = generate_dataset(5, 4, &DatasetSpec::cube(32))?;
    let held = cases.pop().expect("five cases");
    let data = SegDataset::new(cases)?;

    let g = GeneratorConfig { depth: 3, base_channels: 8 };
    let d = DiscriminatorConfig { layers: 2, base_channels: 16 };
    let cfg = SegTrainConfig { steps, lr_g: 1e-3, ..SegTrainConfig::default() };
    let mut trainer = Trainer::new(&data, g, d, cfg)?;
    trainer.train(&data, None, |step, r| {
        if step % 10 == 0 {
            println!("step {step:>4}: d_loss {:.3} g_loss {:.3} batch WT dice {:.3}", r.d_loss, r.g_loss, r.train_dice_wt);
        }
    })?;

    let path = std::env::temp_dir().join("tumorseg_example_seg.ckpt");
    trainer.save(&path)?;
    let trainer = Trainer::load(&path)?;
    let (d_updates, g_updates) = trainer.updates();
    println!("reloaded after {} steps ({d_updates} D / {g_updates} G updates)", trainer.step());

    let mut model = trainer.model();
    let (regions, labels) = segment_case(&mut model, &held)?;
    assert!(regions.is_nested());
    let report = evaluate_case(held.id(), &labels, held.truth().expect("phantom truth"), 95.0)?;
    for r in Region::ALL {
        println!("held-out {r} dice {:.3}", report.region(r).dice);
    }
    Ok(())
}
