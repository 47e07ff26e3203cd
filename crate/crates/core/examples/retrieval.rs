//! Nearest neighbours by cosine similarity of deepest teacher features.

use sdn::experiment::{Benchmark, TeacherRecipe};
use sdn::metrics::{deep_features, FeatureIndex};

fn main() -> sdn::Result<()> {
    let (teacher, _) = TeacherRecipe::default().build()?;
    let bench = Benchmark::standard(1)?;
    let features = deep_features(&teacher, &bench.train.images)?;
    let index = FeatureIndex::from_features(bench.train_ids.clone(), features.clone())?;
    let labels = &bench.train_labels;
    for q in [0, 40, 120, 250] {
        let hits = index.query(&features[q], 5)?;
        let row: Vec<String> = hits
            .iter()
            .map(|h| {
                let pos = bench.train_ids.iter().position(|id| id == &h.id).expect("indexed id");
                format!("{}({}) {:.3}", h.id, bench.class_names[labels[pos]], h.similarity)
            })
            .collect();
        println!("{} [{}]: {}", bench.train_ids[q], bench.class_names[labels[q]], row.join(", "));
    }
    Ok(())
}
