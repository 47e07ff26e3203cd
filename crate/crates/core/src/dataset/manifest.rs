//! Manifest: one header line, then one tab-separated record per line:
//! `id  path  class_id  e0,e1,...`. Paths are relative to the manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::ppm::load_ppm;
use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor;

const HEADER_TAG: &str = "#sdn-manifest";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub image_path: PathBuf,
    pub class_id: usize,
    pub embedding: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory that relative image paths resolve against.
    pub root: PathBuf,
    pub resolution: usize,
    pub embed_dim: usize,
    /// Names for every class id; subsets keep the full list so ids stay
    /// global.
    pub class_names: Vec<String>,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Class ids that occur in the records, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| r.class_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.records[i].image_path)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if r.embedding.len() != self.embed_dim {
                return Err(Error::Dataset(format!(
                    "record {} has embedding length {}, expected {}",
                    r.id,
                    r.embedding.len(),
                    self.embed_dim
                )));
            }
            if r.class_id >= k {
                return Err(Error::Dataset(format!(
                    "record {} has class {} of {k}",
                    r.id, r.class_id
                )));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate record id {}", r.id)));
            }
            if r.id.contains(['\t', '\n']) || r.image_path.to_string_lossy().contains(['\t', '\n']) {
                return Err(Error::Dataset(format!("record {} has tabs or newlines", r.id)));
            }
        }
        Ok(())
    }

    pub fn load_image(&self, i: usize) -> Result<Tensor> {
        let img = load_ppm(self.image_path(i))?;
        let r = self.resolution;
        if img.shape() != [r, r, 3] {
            return Err(Error::Dataset(format!(
                "{} is {:?}, manifest declares {r}×{r}",
                self.image_path(i).display(),
                img.shape()
            )));
        }
        Ok(img)
    }

    /// Images at `indices` stacked into `[B, H, W, 3]`.
    pub fn load_images(&self, indices: &[usize]) -> Result<Tensor> {
        let imgs = indices
            .par_iter()
            .map(|&i| self.load_image(i))
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&imgs)
    }

    pub fn load_all_images(&self) -> Result<Tensor> {
        self.load_images(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn embedding(&self, i: usize) -> Tensor {
        Tensor::new(&[self.embed_dim], self.records[i].embedding.clone()).expect("validated length")
    }

    /// Embeddings at `indices` as `[B, E]`.
    pub fn embeddings(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.embed_dim);
        for &i in indices {
            data.extend_from_slice(&self.records[i].embedding);
        }
        Tensor::new(&[indices.len(), self.embed_dim], data).expect("validated lengths")
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.class_id).collect()
    }

    /// Same root and metadata, records filtered.
    pub fn subset(&self, keep: impl Fn(&Record) -> bool) -> Self {
        Self {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            root: self.root.clone(),
            resolution: self.resolution,
            embed_dim: self.embed_dim,
            class_names: self.class_names.clone(),
            records: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{HEADER_TAG}\tresolution={}\tembed_dim={}\tclasses={}\n",
            self.resolution,
            self.embed_dim,
            self.class_names.join(",")
        );
        for r in &self.records {
            let emb: Vec<String> = r.embedding.iter().map(f32::to_string).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.id,
                r.image_path.display(),
                r.class_id,
                emb.join(",")
            )
            .expect("string write");
        }
        out
    }

    /// Parse manifest text; `root` is the directory paths resolve against.
    pub fn from_text(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = LineIter { text, at: 0 };
        let (offset, header) = lines.next().ok_or(Error::Parse {
            offset: 0,
            msg: "empty manifest".into(),
        })?;
        let mut fields = header.split('\t');
        if fields.next() != Some(HEADER_TAG) {
            return Err(Error::Parse {
                offset,
                msg: format!("header must start with {HEADER_TAG}"),
            });
        }
        let (mut resolution, mut embed_dim, mut class_names) = (None, None, None);
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| Error::Parse {
                offset,
                msg: format!("bad header field {f:?}"),
            })?;
            let num = |v: &str| {
                v.parse::<usize>().map_err(|_| Error::Parse {
                    offset,
                    msg: format!("bad {k} {v:?}"),
                })
            };
            match k {
                "resolution" => resolution = Some(num(v)?),
                "embed_dim" => embed_dim = Some(num(v)?),
                "classes" => {
                    class_names = Some(
                        v.split(',')
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect::<Vec<_>>(),
                    )
                }
                _ => {
                    return Err(Error::Parse {
                        offset,
                        msg: format!("unknown header field {k}"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::Parse {
            offset,
            msg: format!("header lacks {what}"),
        };
        let mut m = Self {
            root: root.into(),
            resolution: resolution.ok_or_else(|| missing("resolution"))?,
            embed_dim: embed_dim.ok_or_else(|| missing("embed_dim"))?,
            class_names: class_names.ok_or_else(|| missing("classes"))?,
            records: Vec::new(),
        };
        for (offset, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { offset, msg };
            let parts: Vec<&str> = line.split('\t').collect();
            let [id, path, class, emb] = parts[..] else {
                return Err(bad(format!("expected 4 tab-separated fields, got {}", parts.len())));
            };
            let class_id = class
                .parse()
                .map_err(|_| bad(format!("bad class id {class:?}")))?;
            let embedding = emb
                .split(',')
                .map(|v| v.parse::<f32>().map_err(|_| bad(format!("bad embedding value {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            m.records.push(Record {
                id: id.to_string(),
                image_path: PathBuf::from(path),
                class_id,
                embedding,
            });
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).at(path)
    }

    /// Load a manifest; image paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).at(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, root)
    }
}

/// Lines with their starting byte offsets.
struct LineIter<'a> {
    text: &'a str,
    at: usize,
}

impl<'a> Iterator for LineIter<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        if self.at >= self.text.len() {
            return None;
        }
        let start = self.at;
        let rest = &self.text[start..];
        let (line, used) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.at += used;
        Some((start, line.strip_suffix('\r').unwrap_or(line)))
    }
}
