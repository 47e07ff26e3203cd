//! Procedural corpus of coloured shapes on noisy backgrounds.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::manifest::{DatasetManifest, Record};
use super::ppm::save_ppm;
use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Square, Shape::Triangle, Shape::Cross];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
        }
    }

    /// Whether offset `(dx, dy)` from the centre lies inside a shape of
    /// radius `r`. `dy` grows downwards.
    pub fn contains(self, dx: f32, dy: f32, r: f32) -> bool {
        match self {
            Shape::Circle => dx * dx + dy * dy <= r * r,
            Shape::Square => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
            Shape::Triangle => {
                // upward triangle inscribed in the circle of radius r
                let half = r * 0.866_025_4;
                let top = -r;
                let base = 0.5 * r;
                if dy < top || dy > base {
                    return false;
                }
                let t = (dy - top) / (base - top);
                dx.abs() <= t * half
            }
            Shape::Cross => {
                let arm = 0.3 * r;
                (dx.abs() <= arm && dy.abs() <= r) || (dy.abs() <= arm && dx.abs() <= r)
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown shape {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedColor {
    pub name: String,
    pub rgb: [f32; 3],
}

impl NamedColor {
    pub fn new(name: &str, rgb: [f32; 3]) -> Self {
        Self {
            name: name.to_string(),
            rgb,
        }
    }

    pub fn red() -> Self {
        Self::new("red", [0.9, 0.15, 0.1])
    }

    pub fn blue() -> Self {
        Self::new("blue", [0.1, 0.25, 0.9])
    }

    pub fn green() -> Self {
        Self::new("green", [0.15, 0.75, 0.2])
    }

    pub fn yellow() -> Self {
        Self::new("yellow", [0.95, 0.85, 0.1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSpec {
    pub shape: Shape,
    pub color: NamedColor,
}

impl ClassSpec {
    pub fn name(&self) -> String {
        format!("{}-{}", self.color.name, self.shape)
    }
}

/// Jitter ranges, as fractions of the resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    /// Maximum centre offset from the image middle.
    pub position: f32,
    /// Radius range.
    pub scale: (f32, f32),
    /// Half-width of the uniform per-channel background noise.
    pub background_noise: f32,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            position: 0.12,
            scale: (0.22, 0.32),
            background_noise: 0.08,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapesConfig {
    pub resolution: usize,
    pub classes: Vec<ClassSpec>,
    pub samples_per_class: usize,
    pub jitter: Jitter,
    pub embed_dim: usize,
    pub seed: u64,
}

/// Leading embedding slots: 4 shape, 3 colour, 3 geometry.
pub const ATTRIBUTE_DIM: usize = 10;

impl ShapesConfig {
    /// Every shape in each colour, shape-major within a colour.
    pub fn palette(colors: &[NamedColor]) -> Vec<ClassSpec> {
        colors
            .iter()
            .flat_map(|c| {
                Shape::ALL.into_iter().map(move |shape| ClassSpec {
                    shape,
                    color: c.clone(),
                })
            })
            .collect()
    }

    /// 8 classes (4 shapes × red, blue), 50 samples each, 32×32.
    pub fn standard(seed: u64) -> Self {
        Self {
            resolution: 32,
            classes: Self::palette(&[NamedColor::red(), NamedColor::blue()]),
            samples_per_class: 50,
            jitter: Jitter::default(),
            embed_dim: 32,
            seed,
        }
    }

    /// 8 classes × 8 samples.
    pub fn smoke(seed: u64) -> Self {
        Self {
            samples_per_class: 8,
            ..Self::standard(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.resolution < 8 || self.samples_per_class == 0 {
            return Err(Error::Config("resolution ≥ 8 and samples_per_class ≥ 1 required".into()));
        }
        if self.embed_dim < ATTRIBUTE_DIM {
            return Err(Error::Config(format!(
                "embed_dim {} < {ATTRIBUTE_DIM} attribute slots",
                self.embed_dim
            )));
        }
        let j = self.jitter;
        let (lo, hi) = j.scale;
        if !(0.0 < lo && lo <= hi && j.position >= 0.0 && j.position + hi <= 0.5) {
            return Err(Error::Config(
                "jitter must keep shapes in frame: 0 < scale.0 ≤ scale.1 and position + scale.1 ≤ 0.5".into(),
            ));
        }
        if !(0.0..=0.5).contains(&j.background_noise) {
            return Err(Error::Config("background_noise must lie in [0, 0.5]".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::Config(format!("class {} listed twice", c.name())));
            }
            if c.color.name.contains([',', '\t', '\n', ' ']) {
                return Err(Error::Config(format!("colour name {:?} not allowed", c.color.name)));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(ClassSpec::name).collect()
    }
}

/// Attributes that drive one rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct Attributes {
    pub shape: Shape,
    pub rgb: [f32; 3],
    /// Centre, as fractions of the resolution.
    pub center: [f32; 2],
    /// Radius as a fraction of the resolution.
    pub scale: f32,
}

/// `one-hot(shape) ‖ rgb ‖ cx, cy, scale`, zero-padded to `embed_dim`.
pub fn encode_embedding(a: &Attributes, embed_dim: usize) -> Vec<f32> {
    let mut e = vec![0.0; embed_dim.max(ATTRIBUTE_DIM)];
    e[a.shape.index()] = 1.0;
    e[4..7].copy_from_slice(&a.rgb);
    e[7] = a.center[0];
    e[8] = a.center[1];
    e[9] = a.scale;
    e.truncate(embed_dim.max(ATTRIBUTE_DIM));
    e
}

pub fn decode_embedding(e: &[f32]) -> Result<Attributes> {
    if e.len() < ATTRIBUTE_DIM {
        return Err(Error::Dataset(format!(
            "embedding of length {} has no attribute block",
            e.len()
        )));
    }
    let hot: Vec<usize> = (0..4).filter(|&i| e[i] == 1.0).collect();
    if hot.len() != 1 || (0..4).any(|i| e[i] != 0.0 && e[i] != 1.0) {
        return Err(Error::Dataset("shape slots are not one-hot".into()));
    }
    Ok(Attributes {
        shape: Shape::ALL[hot[0]],
        rgb: [e[4], e[5], e[6]],
        center: [e[7], e[8]],
        scale: e[9],
    })
}

/// Anti-aliased rendering (4×4 supersampling) over uniform per-channel
/// noise around mid-gray.
pub fn render(a: &Attributes, resolution: usize, noise: f32, rng: &mut impl Rng) -> Tensor {
    const SS: usize = 4;
    let res = resolution as f32;
    let (cx, cy, r) = (a.center[0] * res, a.center[1] * res, a.scale * res);
    let mut data = Vec::with_capacity(resolution * resolution * 3);
    for y in 0..resolution {
        for x in 0..resolution {
            let mut hits = 0;
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f32 + (sx as f32 + 0.5) / SS as f32;
                    let py = y as f32 + (sy as f32 + 0.5) / SS as f32;
                    if a.shape.contains(px - cx, py - cy, r) {
                        hits += 1;
                    }
                }
            }
            let alpha = hits as f32 / (SS * SS) as f32;
            for ch in 0..3 {
                let bg = if noise > 0.0 {
                    0.5 + rng.random_range(-noise..=noise)
                } else {
                    0.5
                };
                let v = alpha * a.rgb[ch] + (1.0 - alpha) * bg;
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(&[resolution, resolution, 3], data).expect("sized above")
}

/// Draw the attributes and image of record `index` (class `class`).
pub fn sample(cfg: &ShapesConfig, class: usize, index: usize) -> (Attributes, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let j = cfg.jitter;
    let mut offset = || {
        if j.position > 0.0 {
            rng.random_range(-j.position..=j.position)
        } else {
            0.0
        }
    };
    let center = [0.5 + offset(), 0.5 + offset()];
    let scale = if j.scale.0 < j.scale.1 {
        rng.random_range(j.scale.0..=j.scale.1)
    } else {
        j.scale.0
    };
    let c = &cfg.classes[class];
    let a = Attributes {
        shape: c.shape,
        rgb: c.color.rgb,
        center,
        scale,
    };
    let img = render(&a, cfg.resolution, j.background_noise, &mut rng);
    (a, img)
}

/// Render the corpus into memory: class-major records with images.
pub fn render_corpus(cfg: &ShapesConfig) -> Result<Vec<(Record, Tensor)>> {
    cfg.validate()?;
    let n = cfg.classes.len() * cfg.samples_per_class;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let class = i / cfg.samples_per_class;
            let (a, img) = sample(cfg, class, i);
            let id = format!("{i:06}");
            let rec = Record {
                image_path: PathBuf::from("images").join(format!("{id}.ppm")),
                id,
                class_id: class,
                embedding: encode_embedding(&a, cfg.embed_dim),
            };
            (rec, img)
        })
        .collect())
}

/// Render the corpus to `out_dir/images/*.ppm` and write
/// `out_dir/manifest.tsv`.
pub fn gen_shapes(cfg: &ShapesConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let corpus = render_corpus(cfg)?;
    let images = out_dir.join("images");
    fs::create_dir_all(&images).at(&images)?;
    corpus
        .par_iter()
        .try_for_each(|(rec, img)| save_ppm(img, out_dir.join(&rec.image_path)))?;
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        resolution: cfg.resolution,
        embed_dim: cfg.embed_dim,
        class_names: cfg.class_names(),
        records: corpus.into_iter().map(|(r, _)| r).collect(),
    };
    manifest.save(out_dir.join(super::MANIFEST_FILE))?;
    Ok(manifest)
}
