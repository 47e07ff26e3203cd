//! Pretrain the MiniVGG teacher on rendered shapes and save it.
//!
//! `cargo run --release --example pretrain_teacher [out.ckpt]`

use sdn::experiment::TeacherRecipe;
use sdn::nets::save_teacher;

fn main() -> sdn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "teacher.ckpt".into());
    let recipe = TeacherRecipe::default();
    println!(
        "{} classes × {} renders, {} epochs at lr {}",
        recipe.corpus.classes.len(),
        recipe.corpus.samples_per_class,
        recipe.pretrain.epochs,
        recipe.pretrain.lr
    );
    let (teacher, report) = recipe.build()?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {:>2}  cross-entropy {l:.4}", e + 1);
    }
    println!(
        "train accuracy {:.3}, held-out accuracy {:.3} ({} images)",
        report.train_accuracy, report.heldout_accuracy, report.heldout_count
    );
    save_teacher(&teacher, &out)?;
    println!("saved {out}");
    Ok(())
}
