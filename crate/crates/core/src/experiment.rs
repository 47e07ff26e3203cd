//! End-to-end benchmark plumbing: an in-memory zero-shot shapes benchmark,
//! a reference teacher, and per-mode training plus evaluation.

use std::time::Instant;

use crate::dataset::{render_corpus, split_zero_shot, DatasetManifest, ShapesConfig};
use crate::distill::{train_on, LossMode, TrainConfig, TrainReport, TrainingSet};
use crate::error::{Error, Result};
use crate::metrics::{interpolate, EvalReport};
use crate::nets::{pretrain_on, GeneratorNet, NetSpec, PretrainConfig, PretrainReport, TeacherNet};
use crate::tensor::Tensor;

/// Seed of the teacher's own corpus, kept apart from benchmark seeds.
pub const TEACHER_CORPUS_SEED: u64 = 1000;
/// Split count for the surrogate inception score.
pub const INCEPTION_SPLITS: usize = 10;

/// How the classifier that acts as teacher is obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherRecipe {
    pub spec: NetSpec,
    pub corpus: ShapesConfig,
    pub pretrain: PretrainConfig,
    pub init_seed: u64,
}

impl Default for TeacherRecipe {
    /// MiniVGG over all 8 standard classes, 100 renders each.
    fn default() -> Self {
        let corpus = ShapesConfig {
            samples_per_class: 100,
            ..ShapesConfig::standard(TEACHER_CORPUS_SEED)
        };
        Self {
            spec: NetSpec::mini_vgg(corpus.classes.len()),
            corpus,
            pretrain: PretrainConfig::default(),
            init_seed: 0,
        }
    }
}

impl TeacherRecipe {
    /// Render the corpus in memory, pretrain, and return the frozen net.
    pub fn build(&self) -> Result<(TeacherNet, PretrainReport)> {
        let corpus = render_corpus(&self.corpus)?;
        let labels: Vec<usize> = corpus.iter().map(|(r, _)| r.class_id).collect();
        let images = Tensor::stack(&corpus.into_iter().map(|(_, t)| t).collect::<Vec<_>>())?;
        let net = TeacherNet::build(self.spec.clone(), self.init_seed)?;
        pretrain_on(net, &images, &labels, &self.pretrain)
    }
}

/// A rendered corpus split by class into seen (training) and unseen
/// (test) pairs.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub class_names: Vec<String>,
    pub train: TrainingSet,
    pub train_ids: Vec<String>,
    pub train_labels: Vec<usize>,
    pub test: TrainingSet,
    pub test_ids: Vec<String>,
    pub test_labels: Vec<usize>,
}

impl Benchmark {
    /// 8 classes × 50 renders at 32×32, 6 seen / 2 unseen classes.
    pub fn standard(seed: u64) -> Result<Self> {
        Self::render(&ShapesConfig::standard(seed), 0.75, seed)
    }

    pub fn render(cfg: &ShapesConfig, train_fraction: f64, split_seed: u64) -> Result<Self> {
        let corpus = render_corpus(cfg)?;
        let (records, images): (Vec<_>, Vec<_>) = corpus.into_iter().unzip();
        let manifest = DatasetManifest {
            root: Default::default(),
            resolution: cfg.resolution,
            embed_dim: cfg.embed_dim,
            class_names: cfg.class_names(),
            records,
        };
        let (train, test) = split_zero_shot(&manifest, train_fraction, split_seed)?;
        let side = |m: &DatasetManifest| -> Result<(TrainingSet, Vec<String>, Vec<usize>)> {
            let pos: Vec<usize> = m
                .records
                .iter()
                .map(|r| manifest.find(&r.id).expect("subset of the same corpus"))
                .collect();
            let imgs = pos.iter().map(|&i| images[i].clone()).collect::<Vec<_>>();
            Ok((
                TrainingSet {
                    embeddings: manifest.embeddings(&pos),
                    images: Tensor::stack(&imgs)?,
                },
                m.records.iter().map(|r| r.id.clone()).collect(),
                m.labels(),
            ))
        };
        let (train_set, train_ids, train_labels) = side(&train)?;
        let (test_set, test_ids, test_labels) = side(&test)?;
        Ok(Self {
            class_names: manifest.class_names,
            train: train_set,
            train_ids,
            train_labels,
            test: test_set,
            test_ids,
            test_labels,
        })
    }
}

/// Outcome of training one loss mode and scoring it on unseen classes.
#[derive(Clone, Debug)]
pub struct ModeRun {
    pub mode: LossMode,
    pub generator: GeneratorNet,
    pub train: TrainReport,
    pub eval: EvalReport,
    pub seconds: f64,
}

impl ModeRun {
    pub fn inception(&self) -> f64 {
        self.eval.inception.as_ref().map_or(f64::NAN, |s| s.mean)
    }
}

/// Train a fresh generator with `cfg` (mode, epochs, lr, seed taken from
/// it) and evaluate on the benchmark's unseen classes.
pub fn run_mode(teacher: &TeacherNet, bench: &Benchmark, cfg: &TrainConfig) -> Result<ModeRun> {
    let start = Instant::now();
    let embed = bench.train.embeddings.shape()[1];
    let mut gen = GeneratorNet::build(teacher.spec(), embed, cfg.n_outputs, cfg.seed)?;
    let report = train_on(teacher, &mut gen, &bench.train, cfg)?;
    let eval = evaluate_unseen(teacher, &gen, bench)?;
    Ok(ModeRun {
        mode: cfg.mode,
        generator: gen,
        train: report,
        eval,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// SSIM/FSIM of the first output against the real unseen image, and the
/// surrogate inception score over all first outputs.
pub fn evaluate_unseen(teacher: &TeacherNet, gen: &GeneratorNet, bench: &Benchmark) -> Result<EvalReport> {
    let outputs = gen.generate_images(&bench.test.embeddings)?;
    let first: Vec<Tensor> = outputs.into_iter().map(|mut o| o.swap_remove(0)).collect();
    let generated = Tensor::stack(&first)?;
    EvalReport::from_pairs(&bench.test_ids, &generated, &bench.test.images)?
        .with_inception(&generated, teacher, INCEPTION_SPLITS)
}

/// Per-embedding output spread of a multi-output generator.
#[derive(Clone, Debug, PartialEq)]
pub struct DiversityStats {
    /// Largest pairwise mean-absolute pixel distance among the outputs.
    pub max_pairwise: Vec<f64>,
    pub threshold: f64,
    /// Share of embeddings whose largest distance exceeds `threshold`.
    pub fraction_diverse: f64,
}

pub fn diversity(gen: &GeneratorNet, embeddings: &Tensor, threshold: f64) -> Result<DiversityStats> {
    if gen.n_outputs() < 2 {
        return Err(Error::Config("diversity needs a generator with ≥ 2 outputs".into()));
    }
    let outputs = gen.generate_images(embeddings)?;
    let max_pairwise: Vec<f64> = outputs
        .iter()
        .map(|outs| {
            let mut best = 0.0f64;
            for i in 0..outs.len() {
                for j in i + 1..outs.len() {
                    let d = mean_abs_diff(&outs[i], &outs[j]);
                    best = best.max(d);
                }
            }
            best
        })
        .collect();
    let hits = max_pairwise.iter().filter(|&&d| d > threshold).count();
    Ok(DiversityStats {
        fraction_diverse: hits as f64 / max_pairwise.len().max(1) as f64,
        max_pairwise,
        threshold,
    })
}

/// First-output images along `e1 → e2`, one generator pass per step so
/// each image depends on its own embedding only.
pub fn interpolation_images(gen: &GeneratorNet, e1: &[f32], e2: &[f32], steps: usize) -> Result<Vec<Tensor>> {
    interpolate(e1, e2, steps)?
        .into_iter()
        .map(|e| {
            let emb = Tensor::new(&[e.len()], e)?;
            Ok(gen.generate(&emb)?.images.swap_remove(0))
        })
        .collect()
}

/// Join `[H, W, C]` images left to right.
pub fn hstack(images: &[Tensor]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("no images to join".into()))?;
    let (h, w, c) = match *first.shape() {
        [h, w, c] => (h, w, c),
        ref s => return Err(Error::Shape(format!("expected [H, W, C], got {s:?}"))),
    };
    let n = images.len();
    let mut data = Vec::with_capacity(h * w * c * n);
    for y in 0..h {
        for img in images {
            data.extend_from_slice(&img.data()[y * w * c..(y + 1) * w * c]);
        }
    }
    Tensor::new(&[h, w * n, c], data)
}

pub fn mean_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f64::from((x - y).abs()))
        .sum();
    s / a.len() as f64
}
