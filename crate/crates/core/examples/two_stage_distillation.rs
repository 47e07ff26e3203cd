//! Stage I then Stage II distillation against the image-only baseline on
//! the zero-shot shapes benchmark, scored on unseen classes.
//!
//! `cargo run --release --example two_stage_distillation [epochs]`

use sdn::distill::{LossMode, TrainConfig};
use sdn::experiment::{run_mode, Benchmark, TeacherRecipe};

fn main() -> sdn::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epoch count"));
    let (teacher, _) = TeacherRecipe::default().build()?;
    let bench = Benchmark::standard(1)?;
    println!(
        "{} training pairs, {} unseen test pairs",
        bench.train.len(),
        bench.test.len()
    );
    for mode in [LossMode::ImageOnly, LossMode::Sdn] {
        let cfg = TrainConfig {
            mode,
            epochs_stage1: epochs,
            epochs_stage2: epochs,
            lr: 1e-3,
            seed: 1,
            ..Default::default()
        };
        let run = run_mode(&teacher, &bench, &cfg)?;
        println!("== {mode}");
        for e in run.train.epochs.iter().step_by(epochs.max(1) / 2 + 1) {
            println!("  {}", e.tsv_line());
        }
        println!(
            "  inception {:.3}  ssim {:.3}  fsim {:.3}  ({:.0}s)",
            run.inception(),
            run.eval.mean_ssim,
            run.eval.mean_fsim,
            run.seconds
        );
    }
    Ok(())
}
