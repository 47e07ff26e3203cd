use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetManifest;
use crate::error::{Error, Result};

/// Number of training classes for `k` classes at `fraction`: rounded
/// down, then clamped so each side keeps at least one class.
pub fn train_class_count(k: usize, fraction: f64) -> usize {
    let n = (fraction * k as f64 + 1e-9).floor() as usize;
    n.clamp(1, k - 1)
}

/// Partition by class: a seeded shuffle of the present classes, the first
/// `train_class_count` go to training. Record order is preserved.
pub fn split_zero_shot(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let mut classes = manifest.present_classes();
    if classes.len() < 2 {
        return Err(Error::Dataset(format!(
            "zero-shot split needs ≥ 2 classes, found {}",
            classes.len()
        )));
    }
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = train_class_count(classes.len(), train_fraction);
    let train: BTreeSet<usize> = classes[..n].iter().copied().collect();
    Ok((
        manifest.subset(|r| train.contains(&r.class_id)),
        manifest.subset(|r| !train.contains(&r.class_id)),
    ))
}
