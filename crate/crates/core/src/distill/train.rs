use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{
    diverse_stage1_loss, diverse_stage2_loss, image_only_loss, stage1_loss, stage2_loss, LossParts,
    RealTarget, TapWeights,
};
use crate::dataset::DatasetManifest;
use crate::error::{Error, IoContext, Result};
use crate::nets::{save_generator, GeneratorNet, TeacherNet};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

/// Which loss drives training. Parsed from and printed as the names
/// `image-only`, `stage1`, `stage2`, `stage1+2`, `sdn`, `diverse`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossMode {
    ImageOnly,
    StageI,
    StageII,
    StageIAndII,
    /// Stage I, then Stage II.
    Sdn,
    /// Diverse Stage I, then diverse Stage II.
    DiverseSdn,
}

impl LossMode {
    pub const ALL: [LossMode; 6] = [
        LossMode::ImageOnly,
        LossMode::StageI,
        LossMode::StageII,
        LossMode::StageIAndII,
        LossMode::Sdn,
        LossMode::DiverseSdn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::ImageOnly => "image-only",
            LossMode::StageI => "stage1",
            LossMode::StageII => "stage2",
            LossMode::StageIAndII => "stage1+2",
            LossMode::Sdn => "sdn",
            LossMode::DiverseSdn => "diverse",
        }
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, LossMode::Sdn | LossMode::DiverseSdn)
    }

    pub fn is_diverse(self) -> bool {
        self == LossMode::DiverseSdn
    }

    /// Phases and their epoch counts. Single-phase modes spend the whole
    /// `epochs1 + epochs2` budget in their one phase.
    pub fn schedule(self, epochs1: usize, epochs2: usize) -> Vec<(Phase, usize)> {
        match self {
            LossMode::ImageOnly => vec![(Phase::Image, epochs1 + epochs2)],
            LossMode::StageI => vec![(Phase::Stage1, epochs1 + epochs2)],
            LossMode::StageII => vec![(Phase::Stage2, epochs1 + epochs2)],
            LossMode::StageIAndII => vec![(Phase::Stage1And2, epochs1 + epochs2)],
            LossMode::Sdn => vec![(Phase::Stage1, epochs1), (Phase::Stage2, epochs2)],
            LossMode::DiverseSdn => vec![
                (Phase::DiverseStage1, epochs1),
                (Phase::DiverseStage2, epochs2),
            ],
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode {s:?}; expected one of image-only, stage1, stage2, stage1+2, sdn, diverse"
                ))
            })
    }
}

/// The loss active during one epoch; written to the training log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Image,
    Stage1,
    Stage2,
    Stage1And2,
    DiverseStage1,
    DiverseStage2,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Image => "image",
            Phase::Stage1 => "stage1",
            Phase::Stage2 => "stage2",
            Phase::Stage1And2 => "stage1+2",
            Phase::DiverseStage1 => "diverse1",
            Phase::DiverseStage2 => "diverse2",
        }
    }

    fn needs_teacher_pass(self) -> bool {
        matches!(self, Phase::Stage2 | Phase::Stage1And2 | Phase::DiverseStage2)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: LossMode,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub n_outputs: usize,
    pub seed: u64,
    /// Write `gen-step<N>.ckpt` every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub tap_weights: Option<Vec<f32>>,
    /// Where `log.tsv` and checkpoints go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Sdn,
            epochs_stage1: 100,
            epochs_stage2: 100,
            lr: 1e-4,
            batch_size: 12,
            n_outputs: 1,
            seed: 0,
            checkpoint_every: 0,
            tap_weights: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.n_outputs == 0 {
            return Err(Error::Config("n_outputs must be ≥ 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        let (e1, e2) = (self.epochs_stage1, self.epochs_stage2);
        if self.mode.is_two_phase() {
            if e1 == 0 || e2 == 0 {
                return Err(Error::Config(format!(
                    "{} runs two stages; both epoch counts must be ≥ 1",
                    self.mode
                )));
            }
        } else if e1 + e2 == 0 {
            return Err(Error::Config("at least one epoch required".into()));
        }
        if !self.mode.is_diverse() && self.n_outputs != 1 {
            return Err(Error::Config(format!(
                "mode {} trains a single output; use diverse for n_outputs > 1",
                self.mode
            )));
        }
        Ok(())
    }

    fn weights(&self) -> TapWeights {
        match &self.tap_weights {
            Some(w) => TapWeights::PerTap(w.clone()),
            None => TapWeights::Uniform,
        }
    }
}

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based, counted across phases.
    pub epoch: usize,
    pub phase: Phase,
    pub feature: f32,
    pub image: f32,
    pub total: f32,
}

impl EpochLog {
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.epoch, self.phase, self.feature, self.image, self.total
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
    pub wall_time: Duration,
    pub final_checkpoint: Option<PathBuf>,
    /// Parameter checksum of the trained generator.
    pub generator_checksum: u64,
}

/// In-memory training pairs.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    /// `[N, E]`
    pub embeddings: Tensor,
    /// `[N, H, W, 3]`
    pub images: Tensor,
}

impl TrainingSet {
    pub fn from_manifest(data: &DatasetManifest) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        let all: Vec<usize> = (0..data.len()).collect();
        Ok(Self {
            embeddings: data.embeddings(&all),
            images: data.load_images(&all)?,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Train `gen` against the frozen `teacher` on manifest pairs.
pub fn train(
    teacher: &TeacherNet,
    gen: &mut GeneratorNet,
    data: &DatasetManifest,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_on(teacher, gen, &TrainingSet::from_manifest(data)?, cfg)
}

/// As [`train`], on in-memory pairs.
pub fn train_on(
    teacher: &TeacherNet,
    gen: &mut GeneratorNet,
    data: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if !teacher.is_frozen() {
        return Err(Error::Config("teacher must be frozen before distillation".into()));
    }
    if gen.n_outputs() != cfg.n_outputs {
        return Err(Error::Config(format!(
            "generator has {} outputs, config asks for {}",
            gen.n_outputs(),
            cfg.n_outputs
        )));
    }
    if gen.teacher_spec() != teacher.spec() {
        return Err(Error::Config("generator was mirrored from a different teacher spec".into()));
    }
    let r = teacher.spec().resolution;
    match *data.images.shape() {
        [_, h, w, 3] if h == r && w == r => {}
        ref s => {
            return Err(Error::Config(format!(
                "training images {s:?} do not match teacher resolution {r}"
            )))
        }
    }
    if data.embeddings.shape() != [data.len(), gen.embed_dim()] {
        return Err(Error::Config(format!(
            "embeddings {:?} do not match generator embed_dim {}",
            data.embeddings.shape(),
            gen.embed_dim()
        )));
    }
    if data.images.shape()[0] != data.len() || data.is_empty() {
        return Err(Error::Config("image and embedding counts differ".into()));
    }

    let start = Instant::now();
    let mut log_file = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).at(dir)?;
            let path = dir.join("log.tsv");
            Some((File::create(&path).at(&path)?, path))
        }
        None => None,
    };
    let weights = cfg.weights();
    let targets = RealTarget::new(teacher, data.images.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut epochs = Vec::new();
    let mut step = 0usize;
    let mut epoch_no = 0usize;

    for (pi, (phase, count)) in cfg
        .mode
        .schedule(cfg.epochs_stage1, cfg.epochs_stage2)
        .into_iter()
        .enumerate()
    {
        if pi > 0 {
            adam.reset();
        }
        for _ in 0..count {
            epoch_no += 1;
            order.shuffle(&mut rng);
            let mut sums = [0.0f64; 3];
            for batch in order.chunks(cfg.batch_size) {
                let (f, i, t) = train_step(teacher, gen, &mut adam, data, &targets, batch, phase, &weights)
                    .map_err(|e| match e {
                        Error::NonFinite { op } => Error::Training {
                            step,
                            msg: format!("non-finite value from {op}"),
                        },
                        Error::NonFiniteLayer { layer } => Error::Training {
                            step,
                            msg: format!("non-finite activation in {layer}"),
                        },
                        other => other,
                    })?;
                if !t.is_finite() {
                    return Err(Error::Training {
                        step,
                        msg: "loss is not finite".into(),
                    });
                }
                let w = batch.len() as f64;
                sums[0] += f64::from(f) * w;
                sums[1] += f64::from(i) * w;
                sums[2] += f64::from(t) * w;
                step += 1;
                if cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every) {
                    if let Some(dir) = &cfg.out_dir {
                        save_generator(gen, dir.join(format!("gen-step{step}.ckpt")))?;
                    }
                }
            }
            let n = data.len() as f64;
            let entry = EpochLog {
                epoch: epoch_no,
                phase,
                feature: (sums[0] / n) as f32,
                image: (sums[1] / n) as f32,
                total: (sums[2] / n) as f32,
            };
            log::info!("{}", entry.tsv_line());
            if let Some((file, path)) = &mut log_file {
                writeln!(file, "{}", entry.tsv_line()).at(path.as_path())?;
            }
            epochs.push(entry);
        }
    }

    let final_checkpoint = match &cfg.out_dir {
        Some(dir) => {
            let path = dir.join("gen.ckpt");
            save_generator(gen, &path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainReport {
        epochs,
        steps: step,
        wall_time: start.elapsed(),
        final_checkpoint,
        generator_checksum: gen.checksum(),
    })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    teacher: &TeacherNet,
    gen: &mut GeneratorNet,
    adam: &mut Adam,
    data: &TrainingSet,
    targets: &RealTarget,
    batch: &[usize],
    phase: Phase,
    weights: &TapWeights,
) -> Result<(f32, f32, f32)> {
    let mut g = Graph::new();
    let gvars = gen.bind(&mut g);
    let emb = g.constant(data.embeddings.gather(batch)?);
    let target = targets.gather(batch)?.bind(&mut g)?;
    let pass = gen.forward(&mut g, &gvars, emb)?;
    let tvars = phase.needs_teacher_pass().then(|| teacher.bind(&mut g));
    let synth = pass.images[0];
    let parts: LossParts = match phase {
        Phase::Image => image_only_loss(&mut g, target.image, synth)?,
        Phase::Stage1 => stage1_loss(&mut g, &target, &pass.taps, synth, weights)?,
        Phase::Stage2 => {
            stage2_loss(&mut g, teacher, tvars.as_ref().expect("bound"), &target, synth, weights)?
        }
        Phase::Stage1And2 => {
            let a = stage1_loss(&mut g, &target, &pass.taps, synth, weights)?;
            let b = stage2_loss(&mut g, teacher, tvars.as_ref().expect("bound"), &target, synth, weights)?;
            LossParts {
                feature: g.add(a.feature, b.feature)?,
                image: g.add(a.image, b.image)?,
                total: g.add(a.total, b.total)?,
            }
        }
        Phase::DiverseStage1 => {
            diverse_stage1_loss(&mut g, &target, &pass.taps, &pass.images, weights)?.parts
        }
        Phase::DiverseStage2 => {
            diverse_stage2_loss(
                &mut g,
                teacher,
                tvars.as_ref().expect("bound"),
                &target,
                &pass.images,
                weights,
            )?
            .parts
        }
    };
    let values = parts.values(&g);
    g.backward(parts.total)?;
    let grads: Vec<_> = gvars.leaves().map(|v| g.grad(v)).collect();
    let mut params = gen.params_mut();
    for (p, grad) in params.iter_mut().zip(grads) {
        p.zero_grad();
        let grad = grad.ok_or_else(|| Error::Backward(format!("no gradient reached {}", p.name())))?;
        p.accumulate_grad(&grad)?;
    }
    adam.step(&mut params)?;
    Ok(values)
}
