use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{fsim, ssim, surrogate_inception_score};
use crate::error::{Error, IoContext, Result};
use crate::nets::TeacherNet;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairScore {
    pub id: String,
    pub ssim: f64,
    pub fsim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InceptionSummary {
    pub mean: f64,
    pub std: f64,
    pub n_splits: usize,
    pub n_images: usize,
}

/// Per-pair similarity scores, their means, and an optional surrogate
/// inception score, plus the settings that produced them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: Vec<(String, String)>,
    pub pairs: Vec<PairScore>,
    pub mean_ssim: f64,
    pub mean_fsim: f64,
    pub inception: Option<InceptionSummary>,
}

impl EvalReport {
    /// Scores `generated[i]` against `real[i]`; both are `[N, H, W, 3]`.
    pub fn from_pairs(ids: &[String], generated: &Tensor, real: &Tensor) -> Result<Self> {
        if generated.shape() != real.shape() || generated.rank() != 4 {
            return Err(Error::Metric(format!(
                "paired evaluation needs equal [N, H, W, 3] batches, got {:?} and {:?}",
                generated.shape(),
                real.shape()
            )));
        }
        let n = generated.shape()[0];
        if ids.len() != n || n == 0 {
            return Err(Error::Metric(format!("{} ids for {n} pairs", ids.len())));
        }
        use rayon::prelude::*;
        let pairs = (0..n)
            .into_par_iter()
            .map(|i| {
                let (g, r) = (generated.index(i)?, real.index(i)?);
                Ok(PairScore {
                    id: ids[i].clone(),
                    ssim: ssim(&g, &r)?,
                    fsim: fsim(&g, &r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = |f: fn(&PairScore) -> f64| pairs.iter().map(f).sum::<f64>() / n as f64;
        Ok(Self {
            config: Vec::new(),
            mean_ssim: mean(|p| p.ssim),
            mean_fsim: mean(|p| p.fsim),
            pairs,
            inception: None,
        })
    }

    pub fn with_inception(
        mut self,
        images: &Tensor,
        classifier: &TeacherNet,
        n_splits: usize,
    ) -> Result<Self> {
        let (mean, std) = surrogate_inception_score(images, classifier, n_splits)?;
        self.inception = Some(InceptionSummary {
            mean,
            std,
            n_splits,
            n_images: images.shape()[0],
        });
        Ok(self)
    }

    pub fn with_config(mut self, config: Vec<(String, String)>) -> Self {
        self.config = config;
        self
    }

    /// `key\tvalue` summary lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.config {
            out.push_str(&format!("config.{k}\t{v}\n"));
        }
        out.push_str(&format!("pairs\t{}\n", self.pairs.len()));
        out.push_str(&format!("mean_ssim\t{:.6}\n", self.mean_ssim));
        out.push_str(&format!("mean_fsim\t{:.6}\n", self.mean_fsim));
        if let Some(s) = &self.inception {
            out.push_str(&format!("inception_mean\t{:.6}\n", s.mean));
            out.push_str(&format!("inception_std\t{:.6}\n", s.std));
            out.push_str(&format!("inception_splits\t{}\n", s.n_splits));
            out.push_str(&format!("inception_images\t{}\n", s.n_images));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per pair: `id,ssim,fsim`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.pairs {
            w.serialize(p)
                .map_err(|e| Error::Metric(format!("csv: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Metric(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.tsv`, `report.json` and `pairs.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).at(dir)?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).at(&p)
        };
        write("report.tsv", self.to_tsv())?;
        write("report.json", self.to_json())?;
        write("pairs.csv", self.to_csv()?)
    }
}
