//! SSIM, FSIM, and the inception score on rendered shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdn::dataset::{sample, ShapesConfig};
use sdn::metrics::{fsim, inception_score_from_probs, ssim};
use sdn::tensor::Tensor;

fn main() -> sdn::Result<()> {
    let cfg = ShapesConfig::standard(3);
    let (_, a) = sample(&cfg, 0, 0);
    let (_, same_class) = sample(&cfg, 0, 1);
    let (_, other_class) = sample(&cfg, 5, 2);
    let darker = a.map(|v| 0.7 * v);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noisy = Tensor::from_fn(a.shape(), |i| (a.data()[i] + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0));
    println!("{:<22} {:>7} {:>7}", "pair", "ssim", "fsim");
    for (name, b) in [
        ("identical", &a),
        ("darker", &darker),
        ("noisy", &noisy),
        ("same class", &same_class),
        ("other class", &other_class),
    ] {
        println!("{name:<22} {:>7.4} {:>7.4}", ssim(&a, b)?, fsim(&a, b)?);
    }

    let k = 8;
    let confident: Vec<Vec<f64>> = (0..80)
        .map(|i| (0..k).map(|c| if c == i % k { 0.93 } else { 0.01 }).collect())
        .collect();
    let unsure = vec![vec![1.0 / k as f64; k]; 80];
    let (c, cs) = inception_score_from_probs(&confident, 10)?;
    let (u, _) = inception_score_from_probs(&unsure, 10)?;
    println!("inception score: confident and varied {c:.3} ± {cs:.3}, uniform {u:.3}");
    Ok(())
}
