//! Folds an inference-time batch-norm layer into the preceding convolution
//! and compares the single affine map with the two-stage computation.

use loopclose::frame_store::{batchnorm_affine, fold_batchnorm, ConvFoldInput};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // 16 output channels over a 3x3 kernel on 8 input channels
    let (channels, inputs) = (16, 3 * 3 * 8);
    let w_conv = DMatrix::from_fn(channels, inputs, |_, _| rng.random_range(-0.5..0.5));
    let b_conv = DVector::from_fn(channels, |_, _| rng.random_range(-0.1..0.1));

    let gamma: Vec<f64> = (0..channels).map(|_| rng.random_range(0.5..1.5)).collect();
    let beta: Vec<f64> = (0..channels).map(|_| rng.random_range(-0.2..0.2)).collect();
    let mean: Vec<f64> = (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    let var: Vec<f64> = (0..channels).map(|_| rng.random_range(0.1..2.0)).collect();
    let (w_bn, b_bn) = batchnorm_affine(&gamma, &beta, &mean, &var, 1e-5)?;

    let input = ConvFoldInput {
        w_conv,
        b_conv,
        w_bn,
        b_bn,
    };
    let folded = fold_batchnorm(&input)?;

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let patch = DVector::from_fn(inputs, |_, _| rng.random_range(-1.0..1.0));
        let staged = &input.w_bn * (&input.w_conv * &patch + &input.b_conv) + &input.b_bn;
        let gap = (folded.apply(&patch) - &staged).amax() / staged.amax();
        worst = worst.max(gap);
    }
    println!(
        "{channels}x{inputs} layer folded, worst relative error over 1000 patches: {worst:.2e}"
    );
    Ok(())
}
