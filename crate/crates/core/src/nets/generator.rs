use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{bind_pair, in_layer, param_checksum, BoundPair, Conv3, Dense};
use super::{FeatureTaps, NetSpec};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Param, Tensor, Var};

/// One step of the generator's conv trunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GenStep {
    /// Nearest-neighbour 2× resize.
    Upsample,
    /// 3×3 conv mirroring teacher layer `mirror_of`.
    Conv {
        name: String,
        mirror_of: String,
        in_channels: usize,
        out_channels: usize,
    },
}

/// Where a teacher tap is read off the generator: the activation after
/// trunk step `after_step`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MirrorTap {
    pub teacher_layer: String,
    pub after_step: usize,
    pub shape: [usize; 3],
}

/// Shape plan of a generator, derived from a teacher spec by reversing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorLayout {
    pub embed_dim: usize,
    pub n_outputs: usize,
    /// Widths of `g_fc8` (the embedding), `g_fc7`, `g_fc6`.
    pub fc_widths: [usize; 3],
    /// `g_fc6` reshaped, equal to the teacher's final pooled shape.
    pub seed_shape: [usize; 3],
    pub steps: Vec<GenStep>,
    pub taps: Vec<MirrorTap>,
}

pub fn mirror_name(teacher_layer: &str) -> String {
    format!("g_{teacher_layer}")
}

impl GeneratorLayout {
    /// Reverse the teacher: each pool becomes an upsample, each conv
    /// `c_in → c_out` becomes a conv `c_out → c_in`, visited deep to
    /// shallow. The shallowest mirror conv emits `3·n_outputs` channels.
    ///
    /// A teacher tap at a channel-preserving conv is read at the output of
    /// its mirror conv; otherwise at that conv's input. Both points carry
    /// the tap's resolution and channel count.
    pub fn mirror(spec: &NetSpec, embed_dim: usize, n_outputs: usize) -> Result<Self> {
        spec.validate()?;
        if embed_dim == 0 || n_outputs == 0 {
            return Err(Error::Config("embed_dim and n_outputs must be ≥ 1".into()));
        }
        if spec.taps.is_empty() {
            return Err(Error::Config("teacher spec declares no taps to mirror".into()));
        }
        let seed_shape = spec.pooled_shape();
        let d = spec.pooled_len();
        let layers = spec.conv_layers();
        let mut steps = Vec::new();
        let mut conv_step = std::collections::HashMap::new();
        for g in (1..=spec.groups.len()).rev() {
            steps.push(GenStep::Upsample);
            for l in layers.iter().filter(|l| l.group == g).rev() {
                let out = if l.group == 1 && l.index == 1 {
                    3 * n_outputs
                } else {
                    l.in_channels
                };
                conv_step.insert(l.name.clone(), steps.len());
                steps.push(GenStep::Conv {
                    name: mirror_name(&l.name),
                    mirror_of: l.name.clone(),
                    in_channels: l.out_channels,
                    out_channels: out,
                });
            }
        }
        let taps = spec
            .tap_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let l = layers.iter().find(|l| l.name == name).expect("validated");
                let s = conv_step[&name];
                let after_step = if l.in_channels == l.out_channels { s } else { s - 1 };
                MirrorTap {
                    teacher_layer: name,
                    after_step,
                    shape,
                }
            })
            .collect();
        let layout = Self {
            embed_dim,
            n_outputs,
            fc_widths: [embed_dim, 4 * d, d],
            seed_shape,
            steps,
            taps,
        };
        layout.verify(spec)?;
        Ok(layout)
    }

    /// Shape after each trunk step, starting from the seed.
    pub fn step_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shape = self.seed_shape;
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            shape = match step {
                GenStep::Upsample => [shape[0] * 2, shape[1] * 2, shape[2]],
                GenStep::Conv {
                    name,
                    in_channels,
                    out_channels,
                    ..
                } => {
                    if *in_channels != shape[2] {
                        return Err(Error::Config(format!(
                            "mirror violation: {name} expects {in_channels} channels, receives {}",
                            shape[2]
                        )));
                    }
                    [shape[0], shape[1], *out_channels]
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    /// Check that every mirrored tap has the teacher's shape and that the
    /// trunk ends in `3·n` channels at the teacher resolution.
    pub fn verify(&self, spec: &NetSpec) -> Result<()> {
        if self.fc_widths[2] != self.seed_shape.iter().product::<usize>() {
            return Err(Error::Config(format!(
                "g_fc6 width {} cannot reshape to {:?}",
                self.fc_widths[2], self.seed_shape
            )));
        }
        if self.seed_shape != spec.pooled_shape() {
            return Err(Error::Config(format!(
                "generator seed {:?} differs from teacher pooled shape {:?}",
                self.seed_shape,
                spec.pooled_shape()
            )));
        }
        let shapes = self.step_shapes()?;
        for tap in &self.taps {
            let want = spec.tap_shape(&tap.teacher_layer).ok_or_else(|| {
                Error::Config(format!("teacher has no tap {}", tap.teacher_layer))
            })?;
            let got = shapes.get(tap.after_step).copied().ok_or_else(|| {
                Error::Config(format!("tap {} points past the trunk", tap.teacher_layer))
            })?;
            if got != want || tap.shape != want {
                return Err(Error::Config(format!(
                    "mirror violation at {}: generator {got:?} vs teacher {want:?}",
                    tap.teacher_layer
                )));
            }
        }
        let last = shapes.last().copied().unwrap_or(self.seed_shape);
        let r = spec.resolution;
        if last != [r, r, 3 * self.n_outputs] {
            return Err(Error::Config(format!(
                "generator output {last:?}, expected [{r}, {r}, {}]",
                3 * self.n_outputs
            )));
        }
        Ok(())
    }

    pub fn conv_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, GenStep::Conv { .. }))
            .count()
    }

    pub fn upsample_count(&self) -> usize {
        self.steps.len() - self.conv_count()
    }

    /// Number of fully connected widths, input included.
    pub fn fc_count(&self) -> usize {
        self.fc_widths.len()
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.step_shapes()
            .ok()
            .and_then(|s| s.last().copied())
            .unwrap_or(self.seed_shape)
    }
}

impl fmt::Display for GeneratorLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [e, h, d] = self.fc_widths;
        writeln!(f, "{:<12} {e}", "g_fc8")?;
        writeln!(f, "{:<12} {h}", "g_fc7")?;
        writeln!(f, "{:<12} {d}", "g_fc6")?;
        let [a, b, c] = self.seed_shape;
        writeln!(f, "{:<12} {a}×{b}×{c}", "reshape")?;
        let shapes = self.step_shapes().map_err(|_| fmt::Error)?;
        let mut ups = 0;
        for (i, (step, s)) in self.steps.iter().zip(&shapes).enumerate() {
            let name = match step {
                GenStep::Upsample => {
                    ups += 1;
                    format!("upsample{ups}")
                }
                GenStep::Conv { name, .. } => name.clone(),
            };
            let taps: Vec<&str> = self
                .taps
                .iter()
                .filter(|t| t.after_step == i)
                .map(|t| t.teacher_layer.as_str())
                .collect();
            let note = if taps.is_empty() {
                String::new()
            } else {
                format!("  ~ {}", taps.join(", "))
            };
            writeln!(f, "{name:<12} {}×{}×{}{note}", s[0], s[1], s[2])?;
        }
        Ok(())
    }
}

/// Mirror-shaped generator: embedding → fc stack → conv trunk → `n`
/// images in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    teacher_spec: NetSpec,
    layout: GeneratorLayout,
    fcs: Vec<Dense>,
    convs: Vec<Conv3>,
}

#[derive(Clone, Debug)]
pub struct GeneratorVars {
    fcs: Vec<BoundPair>,
    convs: Vec<BoundPair>,
}

/// Graph outputs of a generator forward pass.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    /// Activations at the mirror points, keyed by teacher layer name.
    pub taps: FeatureTaps<Var>,
    /// Squashed trunk output with `3·n` channels.
    pub output: Var,
    /// `n` views of `output`, three channels each.
    pub images: Vec<Var>,
}

/// Tensor-level generator output.
#[derive(Clone, Debug)]
pub struct Generated {
    pub taps: FeatureTaps,
    pub images: Vec<Tensor>,
}

impl GeneratorVars {
    /// Leaves in [`GeneratorNet::params`] order.
    pub fn leaves(&self) -> impl Iterator<Item = Var> + '_ {
        self.fcs.iter().chain(&self.convs).flat_map(|p| [p.w, p.b])
    }
}

impl GeneratorNet {
    pub fn build(teacher_spec: &NetSpec, embed_dim: usize, n_outputs: usize, seed: u64) -> Result<Self> {
        let layout = GeneratorLayout::mirror(teacher_spec, embed_dim, n_outputs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [e, h, d] = layout.fc_widths;
        let fcs = vec![Dense::he("g_fc7", e, h, &mut rng), Dense::he("g_fc6", h, d, &mut rng)];
        let convs = layout
            .steps
            .iter()
            .filter_map(|s| match s {
                GenStep::Conv {
                    name,
                    in_channels,
                    out_channels,
                    ..
                } => Some(Conv3::he(name, *in_channels, *out_channels, &mut rng)),
                GenStep::Upsample => None,
            })
            .collect();
        Ok(Self {
            teacher_spec: teacher_spec.clone(),
            layout,
            fcs,
            convs,
        })
    }

    pub fn teacher_spec(&self) -> &NetSpec {
        &self.teacher_spec
    }

    pub fn layout(&self) -> &GeneratorLayout {
        &self.layout
    }

    pub fn embed_dim(&self) -> usize {
        self.layout.embed_dim
    }

    pub fn n_outputs(&self) -> usize {
        self.layout.n_outputs
    }

    pub fn params(&self) -> Vec<&Param> {
        self.fcs
            .iter()
            .flat_map(|d| [&d.weight, &d.bias])
            .chain(self.convs.iter().flat_map(|c| [&c.kernel, &c.bias]))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.fcs
            .iter_mut()
            .flat_map(|d| [&mut d.weight, &mut d.bias])
            .chain(self.convs.iter_mut().flat_map(|c| [&mut c.kernel, &mut c.bias]))
            .collect()
    }

    pub fn checksum(&self) -> u64 {
        param_checksum(self.params())
    }

    /// The layout implied by the actual parameter shapes.
    pub fn effective_layout(&self) -> GeneratorLayout {
        let mut layout = self.layout.clone();
        layout.fc_widths = [self.fcs[0].n_in(), self.fcs[0].n_out(), self.fcs[1].n_out()];
        let mut convs = self.convs.iter();
        for step in &mut layout.steps {
            if let GenStep::Conv {
                in_channels,
                out_channels,
                ..
            } = step
            {
                let c = convs.next().expect("one conv per conv step");
                *in_channels = c.in_channels();
                *out_channels = c.out_channels();
            }
        }
        layout
    }

    /// Re-check the mirror-shape invariant against the current parameters.
    pub fn verify_mirror(&self) -> Result<()> {
        let eff = self.effective_layout();
        if eff.fc_widths[1] != self.fcs[1].n_in() {
            return Err(Error::Config("g_fc7 and g_fc6 widths disagree".into()));
        }
        eff.verify(&self.teacher_spec)
    }

    pub fn bind(&self, g: &mut Graph) -> GeneratorVars {
        GeneratorVars {
            fcs: self
                .fcs
                .iter()
                .map(|d| bind_pair(g, &d.weight, &d.bias))
                .collect(),
            convs: self
                .convs
                .iter()
                .map(|c| bind_pair(g, &c.kernel, &c.bias))
                .collect(),
        }
    }

    /// Record a forward pass for `[E]` or `[B, E]` embeddings.
    pub fn forward(&self, g: &mut Graph, vars: &GeneratorVars, embedding: Var) -> Result<GeneratorPass> {
        let e = self.layout.embed_dim;
        let batch = match *g.value(embedding).shape() {
            [n] if n == e => None,
            [b, n] if n == e => Some(b),
            ref s => {
                return Err(Error::Shape(format!(
                    "generator expects [{e}] or [B,{e}] embeddings, got {s:?}"
                )))
            }
        };
        let mut x = embedding;
        for (p, name) in vars.fcs.iter().zip(["g_fc7", "g_fc6"]) {
            x = in_layer(g.linear(x, p.w, p.b), name)?;
            x = in_layer(g.relu(x), name)?;
        }
        let seed = self.layout.seed_shape;
        x = match batch {
            Some(b) => g.reshape(x, &[b, seed[0], seed[1], seed[2]])?,
            None => g.reshape(x, &seed)?,
        };
        let mut after = Vec::with_capacity(self.layout.steps.len());
        let mut k = 0;
        let n_conv = self.convs.len();
        for step in &self.layout.steps {
            x = match step {
                GenStep::Upsample => in_layer(g.upsample_nearest2(x), "upsample")?,
                GenStep::Conv { name, .. } => {
                    let p = vars.convs[k];
                    k += 1;
                    let y = in_layer(g.conv2d(x, p.w, p.b), name)?;
                    if k == n_conv {
                        in_layer(g.sigmoid(y), name)?
                    } else {
                        in_layer(g.relu(y), name)?
                    }
                }
            };
            after.push(x);
        }
        let mut taps = FeatureTaps::new();
        for tap in &self.layout.taps {
            let v = after[tap.after_step];
            let shape = g.value(v).shape();
            let item = &shape[shape.len() - 3..];
            if item != tap.shape {
                return Err(Error::Shape(format!(
                    "mirror violation at {}: generator {item:?} vs teacher {:?}",
                    tap.teacher_layer, tap.shape
                )));
            }
            taps.push(tap.teacher_layer.clone(), v);
        }
        let output = x;
        let images = (0..self.layout.n_outputs)
            .map(|p| g.slice_channels(output, 3 * p, 3))
            .collect::<Result<Vec<_>>>()?;
        Ok(GeneratorPass {
            taps,
            output,
            images,
        })
    }

    /// Evaluate for one embedding `[E]` or a batch `[B, E]`.
    pub fn generate(&self, embedding: &Tensor) -> Result<Generated> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let e = g.constant(embedding.clone());
        let pass = self.forward(&mut g, &vars, e)?;
        Ok(Generated {
            taps: pass.taps.map(|_, &v| Ok(g.value(v).clone()))?,
            images: pass.images.iter().map(|&v| g.value(v).clone()).collect(),
        })
    }

    /// Images for a batch of embeddings `[B, E]`: per item, `n` images.
    pub fn generate_images(&self, embeddings: &Tensor) -> Result<Vec<Vec<Tensor>>> {
        let b = match *embeddings.shape() {
            [b, _] => b,
            ref s => return Err(Error::Shape(format!("expected [B, E] embeddings, got {s:?}"))),
        };
        let mut out = Vec::with_capacity(b);
        for s in (0..b).step_by(32) {
            let chunk = super::teacher::slice_batch(embeddings, s, (s + 32).min(b))?;
            let gen = self.generate(&chunk)?;
            for i in 0..chunk.shape()[0] {
                out.push(
                    gen.images
                        .iter()
                        .map(|t| t.index(i))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        Ok(out)
    }
}
