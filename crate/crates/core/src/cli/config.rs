use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::distill::LossMode;
use crate::error::{Error, IoContext, Result};
use crate::nets::key_values;

/// Every setting a command may read, fully resolved before work starts.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub mode: LossMode,
    pub epochs1: usize,
    pub epochs2: usize,
    pub lr: f32,
    pub batch: usize,
    pub n_outputs: usize,
    pub checkpoint_every: usize,
    pub samples_per_class: usize,
    pub train_fraction: f64,
    pub embed_dim: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f32,
    pub pretrain_batch: usize,
    pub splits: usize,
    pub k: usize,
    pub steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("run/default"),
            seed: 0,
            data: None,
            teacher: None,
            generator: None,
            mode: LossMode::Sdn,
            epochs1: 100,
            epochs2: 100,
            lr: 1e-4,
            batch: 12,
            n_outputs: 1,
            checkpoint_every: 0,
            samples_per_class: 50,
            train_fraction: 0.75,
            embed_dim: 32,
            pretrain_epochs: 10,
            pretrain_lr: 2e-3,
            pretrain_batch: 16,
            splits: 10,
            k: 5,
            steps: 8,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).at(path)?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in key_values(text)? {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let v = value.trim();
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key.as_str() {
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(&key, v)?,
            "data" => self.data = path(v),
            "teacher" => self.teacher = path(v),
            "generator" | "gen" => self.generator = path(v),
            "mode" => self.mode = parse(&key, v)?,
            "epochs1" => self.epochs1 = parse(&key, v)?,
            "epochs2" => self.epochs2 = parse(&key, v)?,
            "lr" => self.lr = parse(&key, v)?,
            "batch" => self.batch = parse(&key, v)?,
            "n_outputs" => self.n_outputs = parse(&key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(&key, v)?,
            "samples_per_class" => self.samples_per_class = parse(&key, v)?,
            "train_fraction" => self.train_fraction = parse(&key, v)?,
            "embed_dim" => self.embed_dim = parse(&key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(&key, v)?,
            "pretrain_lr" => self.pretrain_lr = parse(&key, v)?,
            "pretrain_batch" => self.pretrain_batch = parse(&key, v)?,
            "splits" => self.splits = parse(&key, v)?,
            "k" => self.k = parse(&key, v)?,
            "steps" => self.steps = parse(&key, v)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines that [`RunConfig::apply_text`] reads back to
    /// an equal config.
    pub fn echo(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let rows: [(&str, String); 21] = [
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
            ("data", opt(&self.data)),
            ("teacher", opt(&self.teacher)),
            ("generator", opt(&self.generator)),
            ("mode", self.mode.to_string()),
            ("epochs1", self.epochs1.to_string()),
            ("epochs2", self.epochs2.to_string()),
            ("lr", format!("{:e}", self.lr)),
            ("batch", self.batch.to_string()),
            ("n_outputs", self.n_outputs.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("samples_per_class", self.samples_per_class.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("pretrain_lr", format!("{:e}", self.pretrain_lr)),
            ("pretrain_batch", self.pretrain_batch.to_string()),
            ("splits", self.splits.to_string()),
            ("k", self.k.to_string()),
            ("steps", self.steps.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.echo()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.teacher.clone().unwrap_or_else(|| self.out.join("teacher.ckpt"))
    }

    pub fn generator_path(&self) -> PathBuf {
        self.generator.clone().unwrap_or_else(|| self.out.join("gen.ckpt"))
    }
}
