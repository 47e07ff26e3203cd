//! Several images per embedding from the min-over-outputs losses. Writes
//! one strip per unseen test embedding.
//!
//! `cargo run --release --example diverse_synthesis [out_dir]`

use sdn::dataset::save_ppm;
use sdn::distill::{LossMode, TrainConfig};
use sdn::experiment::{diversity, hstack, run_mode, Benchmark, TeacherRecipe};

fn main() -> sdn::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "diverse".into()));
    std::fs::create_dir_all(&out).expect("output directory is writable");
    let (teacher, _) = TeacherRecipe::default().build()?;
    let bench = Benchmark::standard(1)?;
    let cfg = TrainConfig {
        mode: LossMode::DiverseSdn,
        epochs_stage1: 8,
        epochs_stage2: 8,
        lr: 1e-3,
        n_outputs: 4,
        seed: 1,
        ..Default::default()
    };
    let run = run_mode(&teacher, &bench, &cfg)?;
    let stats = diversity(&run.generator, &bench.test.embeddings, 0.02)?;
    println!(
        "{:.0}% of unseen embeddings have two outputs further apart than {}",
        100.0 * stats.fraction_diverse,
        stats.threshold
    );
    let outputs = run.generator.generate_images(&bench.test.embeddings)?;
    for (id, outs) in bench.test_ids.iter().zip(&outputs).take(6) {
        save_ppm(&hstack(outs)?, out.join(format!("{id}.ppm")))?;
    }
    println!("strips in {}", out.display());
    Ok(())
}
