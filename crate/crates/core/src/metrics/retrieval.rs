use std::cmp::Ordering;

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::nets::TeacherNet;
use crate::tensor::Tensor;

/// Flattened deepest-tap features of every corpus image, L2-normalized.
#[derive(Clone, Debug)]
pub struct FeatureIndex {
    ids: Vec<String>,
    /// Unit-norm rows; corpus entries with zero-norm features are dropped.
    rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub id: String,
    pub similarity: f64,
}

/// Deepest tap of each image in `[N, H, W, 3]`, flattened per image.
pub fn deep_features(teacher: &TeacherNet, images: &Tensor) -> Result<Vec<Vec<f32>>> {
    let taps = teacher.features(images)?;
    let (_, deep) = taps
        .last()
        .ok_or_else(|| Error::Metric("teacher exports no taps".into()))?;
    let n = deep.shape()[0];
    let d = deep.len() / n.max(1);
    Ok(deep.data().chunks_exact(d).map(<[f32]>::to_vec).collect())
}

fn normalized(v: &[f32]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    (norm > 0.0).then(|| v.iter().map(|&x| f64::from(x) / norm).collect())
}

impl FeatureIndex {
    pub fn build(teacher: &TeacherNet, corpus: &DatasetManifest) -> Result<Self> {
        let images = corpus.load_all_images()?;
        let ids = corpus.records.iter().map(|r| r.id.clone()).collect();
        Self::from_features(ids, deep_features(teacher, &images)?)
    }

    pub fn from_features(ids: Vec<String>, features: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != features.len() {
            return Err(Error::Metric("one feature vector per id required".into()));
        }
        let mut index = Self {
            ids: Vec::new(),
            rows: Vec::new(),
        };
        for (id, f) in ids.into_iter().zip(features) {
            match normalized(&f) {
                Some(row) => {
                    index.ids.push(id);
                    index.rows.push(row);
                }
                None => log::warn!("corpus item {id} has a zero feature vector; excluded"),
            }
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The `k` most cosine-similar entries, similarity descending, ties
    /// broken by ascending id.
    pub fn query(&self, feature: &[f32], k: usize) -> Result<Vec<Hit>> {
        if k > self.len() {
            return Err(Error::Metric(format!("k = {k} exceeds corpus of {}", self.len())));
        }
        let q = normalized(feature)
            .ok_or_else(|| Error::Metric("query has a zero feature vector".into()))?;
        if self.rows.first().is_some_and(|r| r.len() != q.len()) {
            return Err(Error::Metric("query and corpus feature sizes differ".into()));
        }
        let mut hits: Vec<Hit> = self
            .ids
            .iter()
            .zip(&self.rows)
            .map(|(id, row)| Hit {
                id: id.clone(),
                similarity: row.iter().zip(&q).map(|(a, b)| a * b).sum(),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(k);
        Ok(hits)
    }
}

/// Rank the corpus against one `[H, W, 3]` query image.
pub fn retrieve_topk(
    query: &Tensor,
    index: &FeatureIndex,
    teacher: &TeacherNet,
    k: usize,
) -> Result<Vec<Hit>> {
    let batch = Tensor::stack(std::slice::from_ref(query))?;
    let f = deep_features(teacher, &batch)?;
    index.query(&f[0], k)
}
