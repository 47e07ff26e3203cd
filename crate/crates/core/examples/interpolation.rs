//! Images along a straight line between two unseen-class embeddings.
//!
//! `cargo run --release --example interpolation [out.ppm]`

use sdn::dataset::save_ppm;
use sdn::distill::{LossMode, TrainConfig};
use sdn::experiment::{hstack, interpolation_images, run_mode, Benchmark, TeacherRecipe};

fn main() -> sdn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "interpolation.ppm".into());
    let (teacher, _) = TeacherRecipe::default().build()?;
    let bench = Benchmark::standard(1)?;
    let cfg = TrainConfig {
        mode: LossMode::Sdn,
        epochs_stage1: 8,
        epochs_stage2: 8,
        lr: 1e-3,
        seed: 1,
        ..Default::default()
    };
    let run = run_mode(&teacher, &bench, &cfg)?;
    let e = bench.test.embeddings.shape()[1];
    let row = |i: usize| bench.test.embeddings.data()[i * e..(i + 1) * e].to_vec();
    let last = bench.test.len() - 1;
    let images = interpolation_images(&run.generator, &row(0), &row(last), 8)?;
    save_ppm(&hstack(&images)?, &out)?;
    println!("{} → {}: 8 steps written to {out}", bench.test_ids[0], bench.test_ids[last]);
    Ok(())
}
