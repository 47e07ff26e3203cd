//! Command-line front end. Each `cmd_*` function takes a resolved
//! [`RunConfig`] and writes its artifacts under `cfg.out`.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

use crate::dataset::{gen_shapes, load_ppm, save_ppm, split_zero_shot, DatasetManifest, ShapesConfig, MANIFEST_FILE};
use crate::distill::{train, LossMode, TrainConfig, TrainReport};
use crate::error::{Error, IoContext, Result};
use crate::experiment::{hstack, interpolation_images};
use crate::metrics::{retrieve_topk, EvalReport, FeatureIndex, Hit};
use crate::nets::{
    load_generator, load_teacher, pretrain_teacher, save_teacher, GeneratorNet, NetSpec, PretrainConfig,
    PretrainReport, TeacherNet,
};
use crate::tensor::Tensor;

#[derive(Debug, Parser)]
#[command(name = "sdn", version, about = "Distil a frozen classifier into a mirror-shaped image generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run (or dataset) directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest file, or a directory holding `manifest.tsv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Teacher checkpoint [default: <out>/teacher.ckpt].
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Generator checkpoint [default: <out>/gen.ckpt].
    #[arg(long = "gen")]
    pub generator: Option<PathBuf>,
    /// Any other setting, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Default, Args)]
pub struct TrainFlags {
    /// image-only | stage1 | stage2 | stage1+2 | sdn | diverse
    #[arg(long)]
    pub mode: Option<LossMode>,
    #[arg(long)]
    pub epochs1: Option<usize>,
    #[arg(long)]
    pub epochs2: Option<usize>,
    /// Adam step size [default: 1e-4]
    #[arg(long)]
    pub lr: Option<f32>,
    /// Batch size [default: 12]
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub n_outputs: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the shapes corpus and its zero-shot split.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples_per_class: Option<usize>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Train the teacher classifier and freeze it.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pretrain_epochs: Option<usize>,
        #[arg(long)]
        pretrain_lr: Option<f32>,
        #[arg(long)]
        pretrain_batch: Option<usize>,
    },
    /// Train a generator against a frozen teacher.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Write generated images for manifest rows.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Comma-separated record ids [default: all].
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
    },
    /// Score generated images against the real ones.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory of `<id>.ppm` images to score instead of generating.
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        splits: Option<usize>,
    },
    /// Nearest corpus images to a query in teacher feature space.
    Retrieve {
        #[command(flatten)]
        common: Common,
        /// Record id or PPM path.
        #[arg(long)]
        query: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Images along the line between two rows' embeddings.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn push<T: ToString>(v: &mut Vec<(&'static str, String)>, key: &'static str, value: &Option<T>) {
    if let Some(x) = value {
        v.push((key, x.to_string()));
    }
}

fn resolve(common: &Common, mut extra: Vec<(&'static str, String)>) -> Result<RunConfig> {
    let mut o = Vec::new();
    push(&mut o, "seed", &common.seed);
    push(&mut o, "out", &common.out.as_ref().map(|p| p.display().to_string()));
    push(&mut o, "data", &common.data.as_ref().map(|p| p.display().to_string()));
    push(&mut o, "teacher", &common.teacher.as_ref().map(|p| p.display().to_string()));
    push(&mut o, "generator", &common.generator.as_ref().map(|p| p.display().to_string()));
    o.append(&mut extra);
    let mut cfg = RunConfig::resolve(common.config.as_deref(), &o)?;
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

/// Parse flags, merge settings, and run the command; returns the text to
/// print on success.
pub fn run(cli: Cli) -> Result<String> {
    let mut out = String::new();
    match cli.command {
        Command::GenData {
            common,
            samples_per_class,
            train_fraction,
        } => {
            let mut o = Vec::new();
            push(&mut o, "samples_per_class", &samples_per_class);
            push(&mut o, "train_fraction", &train_fraction);
            let cfg = resolve(&common, o)?;
            let (all, tr, te) = cmd_gen_data(&cfg)?;
            let _ = writeln!(
                out,
                "{} records, {} classes: {} train / {} test records in {}",
                all.len(),
                all.num_classes(),
                tr.len(),
                te.len(),
                cfg.out.display()
            );
        }
        Command::Pretrain {
            common,
            pretrain_epochs,
            pretrain_lr,
            pretrain_batch,
        } => {
            let mut o = Vec::new();
            push(&mut o, "pretrain_epochs", &pretrain_epochs);
            push(&mut o, "pretrain_lr", &pretrain_lr);
            push(&mut o, "pretrain_batch", &pretrain_batch);
            let cfg = resolve(&common, o)?;
            let r = cmd_pretrain(&cfg)?;
            let _ = writeln!(
                out,
                "teacher frozen: train accuracy {:.3}, held-out accuracy {:.3} ({} images)",
                r.train_accuracy, r.heldout_accuracy, r.heldout_count
            );
        }
        Command::Train { common, train } => {
            let mut o = Vec::new();
            push(&mut o, "mode", &train.mode);
            push(&mut o, "epochs1", &train.epochs1);
            push(&mut o, "epochs2", &train.epochs2);
            push(&mut o, "lr", &train.lr);
            push(&mut o, "batch", &train.batch);
            push(&mut o, "n_outputs", &train.n_outputs);
            push(&mut o, "checkpoint_every", &train.checkpoint_every);
            let cfg = resolve(&common, o)?;
            let r = cmd_train(&cfg)?;
            for e in &r.epochs {
                let _ = writeln!(out, "{}", e.tsv_line());
            }
            let _ = writeln!(
                out,
                "{} steps in {:.1}s, generator checksum {:016x}",
                r.steps,
                r.wall_time.as_secs_f64(),
                r.generator_checksum
            );
        }
        Command::Synthesize { common, ids } => {
            let cfg = resolve(&common, Vec::new())?;
            let files = cmd_synthesize(&cfg, &ids)?;
            let _ = writeln!(out, "wrote {} images under {}", files.len(), cfg.out.join("images").display());
        }
        Command::Evaluate {
            common,
            generated,
            splits,
        } => {
            let mut o = Vec::new();
            push(&mut o, "splits", &splits);
            let cfg = resolve(&common, o)?;
            let r = cmd_evaluate(&cfg, generated.as_deref())?;
            out.push_str(&r.to_tsv());
        }
        Command::Retrieve { common, query, k } => {
            let mut o = Vec::new();
            push(&mut o, "k", &k);
            let cfg = resolve(&common, o)?;
            out.push_str(&hits_tsv(&cmd_retrieve(&cfg, &query)?));
        }
        Command::Interpolate {
            common,
            from,
            to,
            steps,
        } => {
            let mut o = Vec::new();
            push(&mut o, "steps", &steps);
            let cfg = resolve(&common, o)?;
            let strip = cmd_interpolate(&cfg, &from, &to)?;
            let _ = writeln!(out, "wrote {}", strip.display());
        }
    }
    Ok(out)
}

/// Cap rayon's pool at `SDN_THREADS` when set.
pub fn init_threads() -> Result<()> {
    match std::env::var("SDN_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| Error::Config(format!("SDN_THREADS={v:?} is not a count")))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))
        }
        Err(_) => Ok(()),
    }
}

fn write_echo(cfg: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out).at(&cfg.out)?;
    let path = cfg.out.join("config.echo");
    fs::write(&path, format!("# sdn {command}\n{}", cfg.echo())).at(&path)
}

fn load_data(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given (--data)".into()))?;
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.clone() };
    DatasetManifest::load(file)
}

fn check_resolution(spec: &NetSpec, data: &DatasetManifest, what: &str) -> Result<()> {
    if spec.resolution != data.resolution {
        return Err(Error::Config(format!(
            "{what} expects {}×{} images, dataset has {}×{}",
            spec.resolution, spec.resolution, data.resolution, data.resolution
        )));
    }
    Ok(())
}

fn load_gen_for(cfg: &RunConfig, data: &DatasetManifest) -> Result<GeneratorNet> {
    let gen = load_generator(cfg.generator_path())?;
    check_resolution(gen.teacher_spec(), data, "generator")?;
    if gen.embed_dim() != data.embed_dim {
        return Err(Error::Config(format!(
            "generator takes {}-dim embeddings, dataset has {}",
            gen.embed_dim(),
            data.embed_dim
        )));
    }
    Ok(gen)
}

fn load_teacher_for(cfg: &RunConfig, data: &DatasetManifest) -> Result<TeacherNet> {
    let t = load_teacher(cfg.teacher_path())?;
    check_resolution(t.spec(), data, "teacher")?;
    Ok(t)
}

fn row(data: &DatasetManifest, id: &str) -> Result<usize> {
    data.find(id)
        .ok_or_else(|| Error::Dataset(format!("no record {id:?} in the manifest")))
}

/// Writes `manifest.tsv`, `train.tsv` and `test.tsv` under `cfg.out`.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    write_echo(cfg, "gen-data")?;
    let shapes = ShapesConfig {
        samples_per_class: cfg.samples_per_class,
        embed_dim: cfg.embed_dim,
        ..ShapesConfig::standard(cfg.seed)
    };
    let all = gen_shapes(&shapes, &cfg.out)?;
    let (train, test) = split_zero_shot(&all, cfg.train_fraction, cfg.seed)?;
    train.save(cfg.out.join("train.tsv"))?;
    test.save(cfg.out.join("test.tsv"))?;
    Ok((all, train, test))
}

/// MiniVGG over every class of the manifest; writes `teacher.ckpt` and
/// `pretrain.tsv`.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainReport> {
    let data = load_data(cfg)?;
    write_echo(cfg, "pretrain")?;
    let spec = NetSpec {
        resolution: data.resolution,
        ..NetSpec::mini_vgg(data.num_classes())
    };
    spec.validate()?;
    let net = TeacherNet::build(spec, cfg.seed)?;
    let pc = PretrainConfig {
        epochs: cfg.pretrain_epochs,
        lr: cfg.pretrain_lr,
        batch_size: cfg.pretrain_batch,
        seed: cfg.seed,
        ..PretrainConfig::default()
    };
    let (net, report) = pretrain_teacher(net, &data, &pc)?;
    save_teacher(&net, cfg.out.join("teacher.ckpt"))?;
    let mut text = String::new();
    for (i, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(text, "epoch\t{}\t{l:.6}", i + 1);
    }
    let _ = writeln!(text, "train_accuracy\t{:.6}", report.train_accuracy);
    let _ = writeln!(text, "heldout_accuracy\t{:.6}", report.heldout_accuracy);
    let path = cfg.out.join("pretrain.tsv");
    fs::write(&path, text).at(&path)?;
    Ok(report)
}

/// Writes `gen.ckpt` and `log.tsv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let data = load_data(cfg)?;
    let teacher = load_teacher_for(cfg, &data)?;
    let tc = TrainConfig {
        mode: cfg.mode,
        epochs_stage1: cfg.epochs1,
        epochs_stage2: cfg.epochs2,
        lr: cfg.lr,
        batch_size: cfg.batch,
        n_outputs: cfg.n_outputs,
        seed: cfg.seed,
        checkpoint_every: cfg.checkpoint_every,
        tap_weights: None,
        out_dir: Some(cfg.out.clone()),
    };
    tc.validate()?;
    write_echo(cfg, "train")?;
    let mut gen = GeneratorNet::build(teacher.spec(), data.embed_dim, cfg.n_outputs, cfg.seed)?;
    train(&teacher, &mut gen, &data, &tc)
}

/// `images/<id>.ppm` for the first output, `images/<id>-<p>.ppm` for
/// output `p ≥ 1`.
pub fn cmd_synthesize(cfg: &RunConfig, ids: &[String]) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg)?;
    let gen = load_gen_for(cfg, &data)?;
    write_echo(cfg, "synthesize")?;
    let rows: Vec<usize> = if ids.is_empty() {
        (0..data.len()).collect()
    } else {
        ids.iter().map(|id| row(&data, id)).collect::<Result<_>>()?
    };
    let dir = cfg.out.join("images");
    fs::create_dir_all(&dir).at(&dir)?;
    let outputs = gen.generate_images(&data.embeddings(&rows))?;
    let mut files = Vec::new();
    for (&r, outs) in rows.iter().zip(outputs) {
        for (p, img) in outs.iter().enumerate() {
            let id = &data.records[r].id;
            let name = if p == 0 { format!("{id}.ppm") } else { format!("{id}-{p}.ppm") };
            let path = dir.join(name);
            save_ppm(img, &path)?;
            files.push(path);
        }
    }
    Ok(files)
}

/// Pairs every manifest row with its generated image (from `generated`
/// if given, else from the generator checkpoint); writes `report.tsv`,
/// `report.json` and `pairs.csv`.
pub fn cmd_evaluate(cfg: &RunConfig, generated: Option<&Path>) -> Result<EvalReport> {
    let data = load_data(cfg)?;
    let teacher = load_teacher_for(cfg, &data)?;
    write_echo(cfg, "evaluate")?;
    let real = data.load_all_images()?;
    let fake = match generated {
        Some(dir) => {
            let imgs = data
                .records
                .iter()
                .map(|r| load_ppm(dir.join(format!("{}.ppm", r.id))))
                .collect::<Result<Vec<_>>>()?;
            Tensor::stack(&imgs)?
        }
        None => {
            let gen = load_gen_for(cfg, &data)?;
            let all: Vec<usize> = (0..data.len()).collect();
            let firsts: Vec<Tensor> = gen
                .generate_images(&data.embeddings(&all))?
                .into_iter()
                .map(|mut o| o.swap_remove(0))
                .collect();
            Tensor::stack(&firsts)?
        }
    };
    let ids: Vec<String> = data.records.iter().map(|r| r.id.clone()).collect();
    let report = EvalReport::from_pairs(&ids, &fake, &real)?
        .with_inception(&fake, &teacher, cfg.splits)?
        .with_config(cfg.pairs());
    report.write_all(&cfg.out)?;
    Ok(report)
}

/// Top-`k` corpus rows for a record id or PPM path; writes
/// `retrieval.tsv`.
pub fn cmd_retrieve(cfg: &RunConfig, query: &str) -> Result<Vec<Hit>> {
    let data = load_data(cfg)?;
    let teacher = load_teacher_for(cfg, &data)?;
    write_echo(cfg, "retrieve")?;
    let image = match data.find(query) {
        Some(i) => data.load_image(i)?,
        None => load_ppm(query)?,
    };
    let index = FeatureIndex::build(&teacher, &data)?;
    let hits = retrieve_topk(&image, &index, &teacher, cfg.k)?;
    let path = cfg.out.join("retrieval.tsv");
    fs::write(&path, hits_tsv(&hits)).at(&path)?;
    Ok(hits)
}

fn hits_tsv(hits: &[Hit]) -> String {
    let mut s = String::from("rank\tid\tsimilarity\n");
    for (i, h) in hits.iter().enumerate() {
        let _ = writeln!(s, "{}\t{}\t{:.6}", i + 1, h.id, h.similarity);
    }
    s
}

/// Writes one PPM per step and a side-by-side strip; returns the strip
/// path.
pub fn cmd_interpolate(cfg: &RunConfig, from: &str, to: &str) -> Result<PathBuf> {
    let data = load_data(cfg)?;
    let gen = load_gen_for(cfg, &data)?;
    write_echo(cfg, "interpolate")?;
    let (a, b) = (row(&data, from)?, row(&data, to)?);
    let images = interpolation_images(
        &gen,
        &data.records[a].embedding,
        &data.records[b].embedding,
        cfg.steps,
    )?;
    let dir = cfg.out.join("interpolation");
    fs::create_dir_all(&dir).at(&dir)?;
    for (i, img) in images.iter().enumerate() {
        save_ppm(img, dir.join(format!("{from}-{to}-{i:02}.ppm")))?;
    }
    let strip_path = dir.join(format!("{from}-{to}-strip.ppm"));
    save_ppm(&hstack(&images)?, &strip_path)?;
    Ok(strip_path)
}

/// Place `[H, W, C]` images side by side.
#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_into_overrides() {
        let cli = Cli::try_parse_from([
            "sdn", "train", "--mode", "stage1+2", "--epochs1", "3", "--lr", "0.001", "--out", "r",
            "--set", "k=9",
        ])
        .unwrap();
        let Command::Train { common, train } = cli.command else {
            panic!("wrong command");
        };
        let mut o = Vec::new();
        push(&mut o, "mode", &train.mode);
        push(&mut o, "epochs1", &train.epochs1);
        push(&mut o, "lr", &train.lr);
        let cfg = resolve(&common, o).unwrap();
        assert_eq!(cfg.mode, LossMode::StageIAndII);
        assert_eq!(cfg.epochs1, 3);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.k, 9);
        assert_eq!(cfg.out, PathBuf::from("r"));
    }
}
