use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{bind_pair, in_layer, param_checksum, BoundPair, Conv3, Dense};
use super::{FeatureTaps, NetSpec};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Param, Tensor, Var};

/// Inference chunk size for the tensor-level helpers.
const CHUNK: usize = 32;

/// VGG-style classifier whose conv activations double as feature taps.
#[derive(Clone, Debug)]
pub struct TeacherNet {
    spec: NetSpec,
    convs: Vec<Conv3>,
    head: Vec<Dense>,
    frozen: bool,
}

/// Parameter leaves of one teacher bound into a graph.
#[derive(Clone, Debug)]
pub struct TeacherVars {
    convs: Vec<BoundPair>,
    head: Vec<BoundPair>,
}

/// Graph outputs of a teacher forward pass.
#[derive(Clone, Debug)]
pub struct TeacherPass {
    pub taps: FeatureTaps<Var>,
    /// Output of the last pool, `[B, h, w, c]` or `[h, w, c]`.
    pub pooled: Var,
    pub logits: Option<Var>,
}

impl TeacherVars {
    /// Leaves in [`TeacherNet::params`] order.
    pub fn leaves(&self) -> impl Iterator<Item = Var> + '_ {
        self.convs.iter().chain(&self.head).flat_map(|p| [p.w, p.b])
    }
}

impl TeacherNet {
    /// He-initialized, unfrozen network.
    pub fn build(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = spec
            .conv_layers()
            .iter()
            .map(|l| Conv3::he(&l.name, l.in_channels, l.out_channels, &mut rng))
            .collect();
        let mut head = Vec::new();
        let mut width = spec.pooled_len();
        for (i, &h) in spec.head_hidden.iter().enumerate() {
            head.push(Dense::he(&format!("fc{}", i + 1), width, h, &mut rng));
            width = h;
        }
        head.push(Dense::he("logits", width, spec.num_classes, &mut rng));
        Ok(Self {
            spec,
            convs,
            head,
            frozen: false,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Mark every parameter as not requiring gradients.
    pub fn freeze(&mut self) {
        self.set_frozen(true);
    }

    pub fn unfreeze(&mut self) {
        self.set_frozen(false);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
        for p in self.params_mut() {
            p.set_requires_grad(!frozen);
        }
    }

    /// Parameters in declaration order: conv kernel/bias pairs shallow to
    /// deep, then the head.
    pub fn params(&self) -> Vec<&Param> {
        self.convs
            .iter()
            .flat_map(|c| [&c.kernel, &c.bias])
            .chain(self.head.iter().flat_map(|d| [&d.weight, &d.bias]))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.convs
            .iter_mut()
            .flat_map(|c| [&mut c.kernel, &mut c.bias])
            .chain(self.head.iter_mut().flat_map(|d| [&mut d.weight, &mut d.bias]))
            .collect()
    }

    pub fn checksum(&self) -> u64 {
        param_checksum(self.params())
    }

    pub fn bind(&self, g: &mut Graph) -> TeacherVars {
        TeacherVars {
            convs: self
                .convs
                .iter()
                .map(|c| bind_pair(g, &c.kernel, &c.bias))
                .collect(),
            head: self
                .head
                .iter()
                .map(|d| bind_pair(g, &d.weight, &d.bias))
                .collect(),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<Option<usize>> {
        let r = self.spec.resolution;
        let c = self.spec.in_channels;
        match *shape {
            [h, w, ch] if h == r && w == r && ch == c => Ok(None),
            [b, h, w, ch] if h == r && w == r && ch == c => Ok(Some(b)),
            _ => Err(Error::Shape(format!(
                "teacher expects [{r},{r},{c}] images (optionally batched), got {shape:?}"
            ))),
        }
    }

    /// Record a forward pass. Taps are post-ReLU conv activations. The
    /// head is evaluated only when `with_head` is set.
    pub fn forward(
        &self,
        g: &mut Graph,
        vars: &TeacherVars,
        image: Var,
        with_head: bool,
    ) -> Result<TeacherPass> {
        let batch = self.check_input(g.value(image).shape())?;
        let mut taps = FeatureTaps::new();
        let mut x = image;
        let layers = self.spec.conv_layers();
        let mut k = 0;
        for (gi, convs) in self.spec.groups.iter().enumerate() {
            for _ in convs {
                let l = &layers[k];
                let p = vars.convs[k];
                x = in_layer(g.conv2d(x, p.w, p.b), &l.name)?;
                x = in_layer(g.relu(x), &l.name)?;
                if self.spec.taps.contains(&l.name) {
                    taps.push(l.name.clone(), x);
                }
                k += 1;
            }
            x = in_layer(g.maxpool2(x), &format!("pool{}", gi + 1))?;
        }
        let pooled = x;
        let logits = if with_head {
            let flat = match batch {
                Some(b) => g.reshape(pooled, &[b, self.spec.pooled_len()])?,
                None => g.reshape(pooled, &[self.spec.pooled_len()])?,
            };
            let mut h = flat;
            let last = vars.head.len() - 1;
            for (i, p) in vars.head.iter().enumerate() {
                let name = self.head[i].weight.name().trim_end_matches(".w").to_string();
                h = in_layer(g.linear(h, p.w, p.b), &name)?;
                if i < last {
                    h = in_layer(g.relu(h), &name)?;
                }
            }
            Some(h)
        } else {
            None
        };
        Ok(TeacherPass {
            taps,
            pooled,
            logits,
        })
    }

    /// Tap values for one image `[H,W,C]` or a batch `[B,H,W,C]`.
    pub fn features(&self, images: &Tensor) -> Result<FeatureTaps> {
        let Some(b) = self.check_input(images.shape())? else {
            return self.features_chunk(images.clone());
        };
        let chunks = (0..b)
            .step_by(CHUNK)
            .map(|s| self.features_chunk(slice_batch(images, s, (s + CHUNK).min(b))?))
            .collect::<Result<Vec<_>>>()?;
        concat_taps(&chunks)
    }

    fn features_chunk(&self, images: Tensor) -> Result<FeatureTaps> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let x = g.constant(images);
        let pass = self.forward(&mut g, &vars, x, false)?;
        pass.taps.map(|_, &v| Ok(g.value(v).clone()))
    }

    /// Flattened output of the final pool, one row per image: `[B, D]`.
    pub fn pooled_features(&self, images: &Tensor) -> Result<Tensor> {
        let b = self
            .check_input(images.shape())?
            .ok_or_else(|| Error::Shape("pooled_features expects a batch".into()))?;
        let d = self.spec.pooled_len();
        let mut out = Vec::with_capacity(b * d);
        for s in (0..b).step_by(CHUNK) {
            let mut g = Graph::new();
            let vars = self.bind(&mut g);
            let x = g.constant(slice_batch(images, s, (s + CHUNK).min(b))?);
            let pass = self.forward(&mut g, &vars, x, false)?;
            out.extend_from_slice(g.value(pass.pooled).data());
        }
        Tensor::new(&[b, d], out)
    }

    /// Classifier logits `[B, K]` for a batch of images.
    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        let b = self
            .check_input(images.shape())?
            .ok_or_else(|| Error::Shape("logits expects a batch".into()))?;
        let k = self.spec.num_classes;
        let mut out = Vec::with_capacity(b * k);
        for s in (0..b).step_by(CHUNK) {
            let mut g = Graph::new();
            let vars = self.bind(&mut g);
            let x = g.constant(slice_batch(images, s, (s + CHUNK).min(b))?);
            let pass = self.forward(&mut g, &vars, x, true)?;
            out.extend_from_slice(g.value(pass.logits.expect("head requested")).data());
        }
        Tensor::new(&[b, k], out)
    }

    /// Softmax class probabilities per image, computed in f64.
    pub fn predict_proba(&self, images: &Tensor) -> Result<Vec<Vec<f64>>> {
        let logits = self.logits(images)?;
        let k = self.spec.num_classes;
        Ok(logits
            .data()
            .chunks_exact(k)
            .map(|row| {
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let e: Vec<f64> = row.iter().map(|&z| f64::from(z - max).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            })
            .collect())
    }

    /// Arg-max class per image (lowest index on ties).
    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(images)?;
        Ok(logits
            .data()
            .chunks_exact(self.spec.num_classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }
}

/// Items `start..end` of a batched tensor.
pub(crate) fn slice_batch(t: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let (&b, rest) = t
        .shape()
        .split_first()
        .ok_or_else(|| Error::Shape("slice of a scalar".into()))?;
    if start > end || end > b {
        return Err(Error::Shape(format!("batch slice {start}..{end} of {b}")));
    }
    let inner: usize = rest.iter().product();
    let mut shape = vec![end - start];
    shape.extend_from_slice(rest);
    Tensor::new(&shape, t.data()[start * inner..end * inner].to_vec())
}

fn concat_taps(chunks: &[FeatureTaps]) -> Result<FeatureTaps> {
    let first = chunks
        .first()
        .ok_or_else(|| Error::Shape("no tap chunks".into()))?;
    first.map(|name, t0| {
        let mut data = Vec::new();
        let mut lead = 0;
        for c in chunks {
            let t = c.get(name).expect("same network");
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = t0.shape().to_vec();
        shape[0] = lead;
        Tensor::new(&shape, data)
    })
}
