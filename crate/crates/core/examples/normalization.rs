//! Batch, reference and virtual batch normalization on the same input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tumorseg::tensor::{ChannelStats, Tape, Tensor};

fn main() -> tumorseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::<f64>::randn(&[2, 2, 4, 4], 1.0, &mut rng);
    let reference = Tensor::<f64>::randn(&[8, 2, 4, 4], 3.0, &mut rng);
    let stats = ChannelStats::from_tensor(&reference)?;

    let tape = Tape::new();
    let gamma = tape.constant(&Tensor::new(&[2], vec![1.0, 1.0])?);
    let beta = tape.constant(&Tensor::zeros(&[2]));
    let xv = tape.constant(&x);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let bn = xv.batch_norm(gamma, beta, 1e-5)?.value();
    let rbn = xv.reference_batch_norm(&stats, gamma, beta, 1e-5)?.value();
    let one = Tensor::<f64>::randn(&[1, 2, 4, 4], 1.0, &mut rng);
    let vbn = tape.constant(&one).virtual_batch_norm(&stats, gamma, beta, 1e-5)?.value();
    println!("batch norm      mean {:+.4}", mean(&bn));
    println!("reference norm  mean {:+.4} (reference statistics only)", mean(&rbn));
    println!("virtual norm    mean {:+.4} (reference plus the example)", mean(&vbn));
    Ok(())
}
