use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TeacherNet;
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
    /// Share of records held out for the accuracy report.
    pub holdout_fraction: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 2e-3,
            batch_size: 16,
            seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Mean cross-entropy per epoch.
    pub epoch_losses: Vec<f32>,
    pub train_accuracy: f32,
    pub heldout_accuracy: f32,
    pub heldout_count: usize,
}

/// Cross-entropy training of every teacher parameter on the manifest's
/// class labels. Returns the frozen network.
pub fn pretrain_teacher(
    net: TeacherNet,
    data: &DatasetManifest,
    cfg: &PretrainConfig,
) -> Result<(TeacherNet, PretrainReport)> {
    if data.resolution != net.spec().resolution {
        return Err(Error::Config(format!(
            "dataset resolution {} vs teacher {}",
            data.resolution,
            net.spec().resolution
        )));
    }
    let images = data.load_all_images()?;
    pretrain_on(net, &images, &data.labels(), cfg)
}

/// As [`pretrain_teacher`], on in-memory `[N, H, W, C]` images.
pub fn pretrain_on(
    mut net: TeacherNet,
    images: &Tensor,
    labels: &[usize],
    cfg: &PretrainConfig,
) -> Result<(TeacherNet, PretrainReport)> {
    let k = net.spec().num_classes;
    let n = labels.len();
    if images.shape().first() != Some(&n) {
        return Err(Error::Shape(format!(
            "{n} labels for images {:?}",
            images.shape()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Dataset(format!("label {bad} exceeds {k} classes")));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Dataset(
            "classification pretraining needs at least 2 classes".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be ≥ 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let held = ((n as f64 * cfg.holdout_fraction).round() as usize).min(n - 1);
    let (heldout, train) = order.split_at(held);
    let mut train = train.to_vec();
    let gather = |idx: &[usize]| -> Result<(Tensor, Vec<usize>)> {
        Ok((images.gather(idx)?, idx.iter().map(|&i| labels[i]).collect()))
    };

    net.unfreeze();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0f64;
        for (step, batch) in train.chunks(cfg.batch_size).enumerate() {
            let (x, y) = gather(batch)?;
            let mut g = Graph::new();
            let vars = net.bind(&mut g);
            let xv = g.constant(x);
            let pass = net.forward(&mut g, &vars, xv, true)?;
            let loss = g.cross_entropy(pass.logits.expect("head requested"), &y)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Training {
                    step,
                    msg: format!("non-finite loss in pretraining epoch {}", epoch + 1),
                });
            }
            total += f64::from(value) * batch.len() as f64;
            g.backward(loss)?;
            let grads = vars.leaves().map(|v| g.grad(v)).collect::<Vec<_>>();
            let mut params = net.params_mut();
            for (p, grad) in params.iter_mut().zip(grads) {
                p.zero_grad();
                if let Some(grad) = grad {
                    p.accumulate_grad(&grad)?;
                }
            }
            adam.step(&mut params)?;
        }
        let mean = (total / train.len() as f64) as f32;
        log::info!("pretrain epoch {}: cross-entropy {mean:.4}", epoch + 1);
        epoch_losses.push(mean);
    }
    net.freeze();

    let accuracy = |idx: &[usize]| -> Result<f32> {
        if idx.is_empty() {
            return Ok(0.0);
        }
        let (x, y) = gather(idx)?;
        let pred = net.predict(&x)?;
        let hits = pred.iter().zip(&y).filter(|(p, t)| p == t).count();
        Ok(hits as f32 / idx.len() as f32)
    };
    let report = PretrainReport {
        epoch_losses,
        train_accuracy: accuracy(&train)?,
        heldout_accuracy: accuracy(heldout)?,
        heldout_count: heldout.len(),
    };
    Ok((net, report))
}
