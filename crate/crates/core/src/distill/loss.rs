//! Distillation losses over batched graph values.
//!
//! Every image and tap here carries a leading batch dimension. Losses are
//! built per item (`[B]`) and averaged at the end, so that the diverse
//! variants can take a per-item minimum over outputs and reduce to the
//! plain variants exactly when there is a single output.

use crate::error::{Error, Result};
use crate::nets::{FeatureTaps, TeacherNet, TeacherVars};
use crate::tensor::{Graph, Tensor, Var};

/// Per-tap multipliers for the feature terms, in tap order.
#[derive(Clone, Debug, PartialEq)]
pub enum TapWeights {
    Uniform,
    PerTap(Vec<f32>),
}

impl TapWeights {
    fn get(&self, i: usize, n: usize) -> Result<f32> {
        match self {
            TapWeights::Uniform => Ok(1.0),
            TapWeights::PerTap(w) if w.len() == n => Ok(w[i]),
            TapWeights::PerTap(w) => Err(Error::Loss(format!(
                "{} tap weights for {n} taps",
                w.len()
            ))),
        }
    }
}

/// Real images and their frozen-teacher taps as tensors.
#[derive(Clone, Debug)]
pub struct RealTarget {
    pub image: Tensor,
    pub taps: FeatureTaps,
}

/// A [`RealTarget`] recorded as graph constants.
#[derive(Clone, Debug)]
pub struct Target {
    pub image: Var,
    pub taps: FeatureTaps<Var>,
}

impl RealTarget {
    /// Images `[B, H, W, C]` with taps computed by `teacher`.
    pub fn new(teacher: &TeacherNet, images: Tensor) -> Result<Self> {
        let taps = teacher.features(&images)?;
        Ok(Self {
            image: images,
            taps,
        })
    }

    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            image: self.image.gather(indices)?,
            taps: self.taps.map(|_, t| t.gather(indices))?,
        })
    }

    pub fn bind(&self, g: &mut Graph) -> Result<Target> {
        Ok(Target {
            image: g.constant(self.image.clone()),
            taps: self.taps.map(|_, t| Ok(g.constant(t.clone())))?,
        })
    }
}

/// Scalar components of a loss. `total` is the value that is minimized.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub feature: Var,
    pub image: Var,
    pub total: Var,
}

impl LossParts {
    pub fn values(&self, g: &Graph) -> (f32, f32, f32) {
        (
            g.value(self.feature).item(),
            g.value(self.image).item(),
            g.value(self.total).item(),
        )
    }
}

/// A diverse loss with the output chosen for each batch item.
#[derive(Clone, Debug)]
pub struct DiverseParts {
    pub parts: LossParts,
    pub choice: Vec<usize>,
}

fn require_batched(g: &Graph, v: Var, what: &str) -> Result<usize> {
    match g.value(v).shape() {
        [b, _, _, _] => Ok(*b),
        s => Err(Error::Loss(format!("{what} must be [B, H, W, C], got {s:?}"))),
    }
}

/// Mean absolute pixel difference.
pub fn image_loss(g: &mut Graph, real: Var, synth: Var) -> Result<Var> {
    if g.value(real).shape() != g.value(synth).shape() {
        return Err(Error::Loss(format!(
            "image shapes differ: {:?} vs {:?}",
            g.value(real).shape(),
            g.value(synth).shape()
        )));
    }
    g.l1_mean(real, synth)
}

/// Per-item image term, `[B]`.
pub fn image_loss_per_item(g: &mut Graph, real: Var, synth: Var) -> Result<Var> {
    require_batched(g, real, "real image")?;
    if g.value(real).shape() != g.value(synth).shape() {
        return Err(Error::Loss(format!(
            "image shapes differ: {:?} vs {:?}",
            g.value(real).shape(),
            g.value(synth).shape()
        )));
    }
    g.l1_mean_per_item(real, synth)
}

/// `Σ_l w_l · l1(reference_l, other_l)` per item, `[B]`. Taps pair by
/// name; every reference tap must have a partner and vice versa.
pub fn feature_loss_per_item(
    g: &mut Graph,
    reference: &FeatureTaps<Var>,
    other: &FeatureTaps<Var>,
    weights: &TapWeights,
) -> Result<Var> {
    if reference.is_empty() {
        return Err(Error::Loss("no taps to compare".into()));
    }
    if let Some(extra) = other.names().find(|n| reference.get(n).is_none()) {
        return Err(Error::Loss(format!("tap {extra} has no reference partner")));
    }
    let n = reference.len();
    let mut acc: Option<Var> = None;
    for (i, (name, &r)) in reference.iter().enumerate() {
        let &o = other
            .get(name)
            .ok_or_else(|| Error::Loss(format!("tap {name} is unpaired")))?;
        if g.value(r).shape() != g.value(o).shape() {
            return Err(Error::Loss(format!(
                "tap {name}: {:?} vs {:?}",
                g.value(r).shape(),
                g.value(o).shape()
            )));
        }
        let mut term = g.l1_mean_per_item(r, o)?;
        let w = weights.get(i, n)?;
        if w != 1.0 {
            term = g.scale(term, w)?;
        }
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    Ok(acc.expect("at least one tap"))
}

fn finish(g: &mut Graph, feature: Var, image: Var, per_item_total: Var) -> Result<LossParts> {
    Ok(LossParts {
        feature: g.mean(feature)?,
        image: g.mean(image)?,
        total: g.mean(per_item_total)?,
    })
}

/// Image term alone.
pub fn image_only_loss(g: &mut Graph, real: Var, synth: Var) -> Result<LossParts> {
    let image = image_loss_per_item(g, real, synth)?;
    let zero = g.constant(Tensor::scalar(0.0));
    Ok(LossParts {
        feature: zero,
        image: g.mean(image)?,
        total: g.mean(image)?,
    })
}

/// Generator taps against the teacher's taps of the real image, plus the
/// image term.
pub fn stage1_loss(
    g: &mut Graph,
    target: &Target,
    gen_taps: &FeatureTaps<Var>,
    synth: Var,
    weights: &TapWeights,
) -> Result<LossParts> {
    let feature = feature_loss_per_item(g, &target.taps, gen_taps, weights)?;
    let image = image_loss_per_item(g, target.image, synth)?;
    let total = g.add(feature, image)?;
    finish(g, feature, image, total)
}

fn frozen(teacher: &TeacherNet) -> Result<()> {
    if !teacher.is_frozen() {
        return Err(Error::Loss(
            "teacher must be frozen before it can supervise the generator".into(),
        ));
    }
    Ok(())
}

/// Per-item Stage-II pieces for one synthetic batch.
fn stage2_items(
    g: &mut Graph,
    teacher: &TeacherNet,
    tvars: &TeacherVars,
    target: &Target,
    synth: Var,
    weights: &TapWeights,
) -> Result<(Var, Var)> {
    let pass = teacher.forward(g, tvars, synth, false)?;
    let feature = feature_loss_per_item(g, &target.taps, &pass.taps, weights)?;
    let image = image_loss_per_item(g, target.image, synth)?;
    Ok((feature, image))
}

/// Teacher taps of the synthetic image against those of the real image,
/// plus the image term. Gradients pass through the frozen teacher.
pub fn stage2_loss(
    g: &mut Graph,
    teacher: &TeacherNet,
    tvars: &TeacherVars,
    target: &Target,
    synth: Var,
    weights: &TapWeights,
) -> Result<LossParts> {
    frozen(teacher)?;
    let (feature, image) = stage2_items(g, teacher, tvars, target, synth, weights)?;
    let total = g.add(feature, image)?;
    finish(g, feature, image, total)
}

/// Shared generator-tap term plus, per item, the smallest image term over
/// the `n` outputs.
pub fn diverse_stage1_loss(
    g: &mut Graph,
    target: &Target,
    gen_taps: &FeatureTaps<Var>,
    synth: &[Var],
    weights: &TapWeights,
) -> Result<DiverseParts> {
    if synth.is_empty() {
        return Err(Error::Loss("diverse loss needs at least one output".into()));
    }
    let feature = feature_loss_per_item(g, &target.taps, gen_taps, weights)?;
    let per_output = synth
        .iter()
        .map(|&s| image_loss_per_item(g, target.image, s))
        .collect::<Result<Vec<_>>>()?;
    let (image, choice) = g.min_across(&per_output)?;
    let total = g.add(feature, image)?;
    Ok(DiverseParts {
        parts: finish(g, feature, image, total)?,
        choice,
    })
}

/// Per item, the smallest Stage-II bracket (feature + image) over the
/// `n` outputs.
pub fn diverse_stage2_loss(
    g: &mut Graph,
    teacher: &TeacherNet,
    tvars: &TeacherVars,
    target: &Target,
    synth: &[Var],
    weights: &TapWeights,
) -> Result<DiverseParts> {
    frozen(teacher)?;
    if synth.is_empty() {
        return Err(Error::Loss("diverse loss needs at least one output".into()));
    }
    let mut totals = Vec::with_capacity(synth.len());
    let mut pieces = Vec::with_capacity(synth.len());
    for &s in synth {
        let (f, i) = stage2_items(g, teacher, tvars, target, s, weights)?;
        totals.push(g.add(f, i)?);
        pieces.push((f, i));
    }
    let (total, choice) = g.min_across(&totals)?;
    // reported components follow the chosen output of each item
    let pick = |g: &Graph, which: fn(&(Var, Var)) -> Var| -> Result<Tensor> {
        let data = choice
            .iter()
            .enumerate()
            .map(|(b, &p)| g.value(which(&pieces[p])).data()[b])
            .collect();
        Tensor::new(&[choice.len()], data)
    };
    let feature = pick(g, |p| p.0)?;
    let image = pick(g, |p| p.1)?;
    let feature = g.constant(feature);
    let image = g.constant(image);
    Ok(DiverseParts {
        parts: LossParts {
            feature: g.mean(feature)?,
            image: g.mean(image)?,
            total: g.mean(total)?,
        },
        choice,
    })
}

/// Evaluate a scalar-loss builder and return its value, for tests that
/// compare losses without training.
pub fn loss_value(build: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<f32> {
    let mut g = Graph::new();
    let v = build(&mut g)?;
    Ok(g.value(v).item())
}
