//! Render the shapes corpus to disk and split it by class.
//!
//! `cargo run --release --example zero_shot_split [out_dir]`

use sdn::dataset::{gen_shapes, split_zero_shot, ShapesConfig};

fn main() -> sdn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "shapes".into());
    let cfg = ShapesConfig::standard(0);
    let manifest = gen_shapes(&cfg, &out)?;
    println!("{} records in {out}", manifest.len());
    let (train, test) = split_zero_shot(&manifest, 0.75, 0)?;
    let names = |classes: Vec<usize>| -> Vec<String> {
        classes.into_iter().map(|c| manifest.class_names[c].clone()).collect()
    };
    println!("seen   ({} images): {:?}", train.len(), names(train.present_classes()));
    println!("unseen ({} images): {:?}", test.len(), names(test.present_classes()));
    Ok(())
}
