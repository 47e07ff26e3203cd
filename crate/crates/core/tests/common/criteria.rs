//! One checker per acceptance criterion. The integration tests assert on
//! the cheap ones; the acceptance target runs all of them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdn::dataset::{split_zero_shot, train_class_count, DatasetManifest, Record, ShapesConfig};
use sdn::distill::{
    diverse_stage1_loss, diverse_stage2_loss, stage1_loss, stage2_loss, train_on, LossMode,
    RealTarget, TapWeights, TrainConfig, TrainReport,
};
use sdn::experiment::{diversity, interpolation_images, run_mode, Benchmark, ModeRun};
use sdn::metrics::{deep_features, fsim, inception_score_from_probs, ssim, FeatureIndex};
use sdn::nets::{GeneratorLayout, GeneratorNet, NetSpec, TeacherNet};
use sdn::tensor::{Graph, Tensor};

use super::gradcheck::{composite_check, op_checks, Composite};
use super::metric_corpus::{load_pair, REFERENCE};
use super::reference::{self as r, Arr};

pub const GRADIENT_SECONDS: f64 = 60.0;
pub const SSIM_IDENTITY: f64 = 1e-9;
pub const FSIM_IDENTITY: f64 = 1e-6;
pub const SSIM_REFERENCE: f64 = 1e-6;
pub const FSIM_REFERENCE: f64 = 1e-4;
pub const SMOKE_STEPS: usize = 200;
pub const SMOKE_DROP: f64 = 0.30;
pub const SMOKE_SECONDS: f64 = 300.0;
pub const ABLATION_SEEDS: [u64; 3] = [1, 2, 3];
pub const ABLATION_EPOCHS: usize = 30;
pub const ABLATION_LR: f32 = 1e-3;
pub const ABLATION_MIN_WINS: usize = 2;
pub const ABLATION_SECONDS: f64 = 1800.0;
pub const DIVERSE_OUTPUTS: usize = 4;
pub const DIVERSE_THRESHOLD: f64 = 0.02;
pub const DIVERSE_FRACTION: f64 = 0.8;
pub const ZERO_SHOT_CONFIGS: usize = 100;
pub const RETRIEVAL_QUERIES: usize = 20;
pub const RETRIEVAL_SIMILARITY: f64 = 1.0 - 1e-6;

#[derive(Clone, Debug)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(&[h, w, 3], |_| rng.random_range(0.0..1.0))
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, res: usize) -> Tensor {
    Tensor::from_fn(&[b, res, res, 3], |_| rng.random_range(0.0..1.0))
}

pub fn gradient_integrity() -> Verdict {
    let start = Instant::now();
    let mut checks = op_checks(1);
    checks.extend(op_checks(2));
    let n_ops = checks.len();
    checks.extend(Composite::ALL.into_iter().map(|c| composite_check(c, 11)));
    let secs = start.elapsed().as_secs_f64();
    let worst = checks
        .iter()
        .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
        .unwrap();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.ok()).map(|c| c.name.as_str()).collect();
    Verdict::new(
        failed.is_empty() && secs < GRADIENT_SECONDS,
        format!(
            "{n_ops} op checks + {} losses; worst rel err {:.1e} ({}); failed {:?}; {secs:.1}s",
            Composite::ALL.len(),
            worst.rel_err,
            worst.name,
            failed
        ),
    )
}

fn strip_batch(s: &[usize]) -> Vec<usize> {
    s[s.len() - 3..].to_vec()
}

/// Tap-by-tap shape equality from a real forward pass on both nets.
fn forward_taps_agree(spec: NetSpec, n_outputs: usize) -> Result<usize, String> {
    let teacher = TeacherNet::build(spec.clone(), 0).map_err(|e| e.to_string())?;
    let gen = GeneratorNet::build(&spec, 32, n_outputs, 1).map_err(|e| e.to_string())?;
    let out = gen.generate(&Tensor::full(&[32], 0.5)).map_err(|e| e.to_string())?;
    let taps = teacher.features(&out.images[0]).map_err(|e| e.to_string())?;
    if taps.len() != out.taps.len() {
        return Err(format!("{} teacher taps vs {} generator taps", taps.len(), out.taps.len()));
    }
    for (name, t) in taps.iter() {
        let g = out.taps.get(name).ok_or(format!("generator lacks {name}"))?;
        if strip_batch(g.shape()) != strip_batch(t.shape()) {
            return Err(format!("{name}: {:?} vs {:?}", g.shape(), t.shape()));
        }
    }
    Ok(taps.len())
}

pub fn mirror_shapes() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (label, spec) in [
        ("MiniVGG", NetSpec::mini_vgg(8)),
        ("MiniVGG all taps", NetSpec::mini_vgg(8).with_all_taps()),
    ] {
        match forward_taps_agree(spec, 1) {
            Ok(n) => notes.push(format!("{label}: {n} taps equal")),
            Err(e) => {
                pass = false;
                notes.push(format!("{label}: {e}"));
            }
        }
    }
    for (label, spec) in [
        ("VGG19", NetSpec::vgg19(1000)),
        ("VGG19 all taps", NetSpec::vgg19(1000).with_all_taps()),
    ] {
        let census = spec.conv_count() == 16 && spec.groups.len() == 5 && spec.resolution == 224;
        let ok = match GeneratorLayout::mirror(&spec, 32, 1) {
            Ok(l) => {
                let paired = l.taps.len() == spec.taps.len()
                    && l.taps.iter().all(|t| spec.tap_shape(&t.teacher_layer) == Some(t.shape));
                let structure = l.conv_count() == 16
                    && l.upsample_count() == 5
                    && l.fc_count() == 3
                    && l.output_shape() == [224, 224, 3]
                    && l.verify(&spec).is_ok();
                notes.push(format!(
                    "{label}: {} convs, {} upsamples, {} fc, output {:?}, {} taps paired",
                    l.conv_count(),
                    l.upsample_count(),
                    l.fc_count(),
                    l.output_shape(),
                    l.taps.len()
                ));
                paired && structure
            }
            Err(e) => {
                notes.push(format!("{label}: {e}"));
                false
            }
        };
        pass &= census && ok && spec.tap_shape("conv5_4") == Some([14, 14, 512]);
    }
    Verdict::new(pass, notes.join("; "))
}

pub fn metric_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ssim = 0.0f64;
    let mut worst_fsim = 0.0f64;
    for (h, w) in [(32, 32), (17, 23), (48, 40), (9, 9)] {
        let x = random_image(&mut rng, h, w);
        worst_ssim = worst_ssim.max((ssim(&x, &x).unwrap() - 1.0).abs());
        worst_fsim = worst_fsim.max((fsim(&x, &x).unwrap() - 1.0).abs());
    }
    let k = 8;
    let uniform = vec![vec![1.0 / k as f64; k]; 40];
    let one_hot: Vec<Vec<f64>> = (0..40)
        .map(|i| (0..k).map(|c| if c == i % k { 1.0 } else { 0.0 }).collect())
        .collect();
    let (u, _) = inception_score_from_probs(&uniform, 1).unwrap();
    let (o, _) = inception_score_from_probs(&one_hot, 1).unwrap();
    let closed_forms = u == 1.0 && (o - k as f64).abs() <= 1e-12 * k as f64;

    let mut dev_s = 0.0f64;
    let mut dev_f = 0.0f64;
    for &(name, s_ref, f_ref) in REFERENCE.iter() {
        let (a, b) = load_pair(name);
        dev_s = dev_s.max((ssim(&a, &b).unwrap() - s_ref).abs());
        dev_f = dev_f.max((fsim(&a, &b).unwrap() - f_ref).abs());
    }
    Verdict::new(
        worst_ssim <= SSIM_IDENTITY
            && worst_fsim <= FSIM_IDENTITY
            && closed_forms
            && dev_s <= SSIM_REFERENCE
            && dev_f <= FSIM_REFERENCE,
        format!(
            "|ssim(x,x)-1| {worst_ssim:.1e}, |fsim(x,x)-1| {worst_fsim:.1e}, score uniform {u} one-hot {o}; \
             reference corpus ({} pairs) max dev ssim {dev_s:.1e} fsim {dev_f:.1e}",
            REFERENCE.len()
        ),
    )
}

fn frozen_teacher(seed: u64) -> TeacherNet {
    let mut t = TeacherNet::build(NetSpec::mini_vgg(8), seed).unwrap();
    t.freeze();
    t
}

/// Diverse losses at n = 1 against their Stage counterparts, compared
/// bit for bit.
pub fn reduction_identity(seed: u64) -> Result<(), String> {
    let teacher = frozen_teacher(seed);
    let gen = GeneratorNet::build(teacher.spec(), 32, 1, seed + 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let real = RealTarget::new(&teacher, random_batch(&mut rng, 3, 32)).unwrap();
    let emb = Tensor::from_fn(&[3, 32], |_| rng.random_range(-1.0..1.0));
    let w = TapWeights::Uniform;
    let eval = |diverse: bool, second: bool| -> (u32, Vec<u32>) {
        let mut g = Graph::new();
        let vars = gen.bind(&mut g);
        let tvars = teacher.bind(&mut g);
        let target = real.bind(&mut g).unwrap();
        let e = g.constant(emb.clone());
        let pass = gen.forward(&mut g, &vars, e).unwrap();
        let loss = match (diverse, second) {
            (false, false) => stage1_loss(&mut g, &target, &pass.taps, pass.images[0], &w).unwrap().total,
            (true, false) => {
                diverse_stage1_loss(&mut g, &target, &pass.taps, &pass.images, &w).unwrap().parts.total
            }
            (false, true) => stage2_loss(&mut g, &teacher, &tvars, &target, pass.images[0], &w).unwrap().total,
            (true, true) => {
                diverse_stage2_loss(&mut g, &teacher, &tvars, &target, &pass.images, &w)
                    .unwrap()
                    .parts
                    .total
            }
        };
        let value = g.value(loss).item().to_bits();
        g.backward(loss).unwrap();
        let grads = vars
            .leaves()
            .flat_map(|v| g.grad(v).unwrap().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect();
        (value, grads)
    };
    for (second, label) in [(false, "stage I"), (true, "stage II")] {
        let (v0, g0) = eval(false, second);
        let (v1, g1) = eval(true, second);
        if v0 != v1 {
            return Err(format!(
                "{label}: {} vs {}",
                f32::from_bits(v0),
                f32::from_bits(v1)
            ));
        }
        if g0 != g1 {
            return Err(format!("{label}: gradients differ"));
        }
    }
    Ok(())
}

fn taps_arr(taps: &sdn::nets::FeatureTaps) -> Vec<(String, Arr)> {
    taps.iter().map(|(n, t)| (n.to_string(), Arr::from_tensor(t))).collect()
}

/// The min-selection of both diverse losses against a brute-force f64
/// evaluation of every output. Returns the number of items compared.
pub fn argmin_matches(n: usize, seed: u64) -> Result<usize, String> {
    let teacher = frozen_teacher(seed);
    let gen = GeneratorNet::build(teacher.spec(), 32, n, seed + 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let b = 5;
    let images = random_batch(&mut rng, b, 32);
    let real = RealTarget::new(&teacher, images.clone()).unwrap();
    let emb = Tensor::from_fn(&[b, 32], |_| rng.random_range(-1.0..1.0));
    let w = TapWeights::Uniform;

    let mut g = Graph::new();
    let vars = gen.bind(&mut g);
    let tvars = teacher.bind(&mut g);
    let target = real.bind(&mut g).unwrap();
    let e = g.constant(emb.clone());
    let pass = gen.forward(&mut g, &vars, e).unwrap();
    let d1 = diverse_stage1_loss(&mut g, &target, &pass.taps, &pass.images, &w).unwrap();
    let d2 = diverse_stage2_loss(&mut g, &teacher, &tvars, &target, &pass.images, &w).unwrap();
    let (_, image1, _) = d1.parts.values(&g);
    let (_, _, total2) = d2.parts.values(&g);

    let real_arr = Arr::from_tensor(&images);
    let real_taps = taps_arr(&real.taps);
    let outs: Vec<Arr> = pass.images.iter().map(|&v| Arr::from_tensor(g.value(v))).collect();
    let image_terms: Vec<Vec<f64>> = outs.iter().map(|o| r::l1_per_item(&real_arr, o)).collect();
    let stage2_terms: Vec<Vec<f64>> = pass
        .images
        .iter()
        .zip(&image_terms)
        .map(|(&v, it)| {
            let t = taps_arr(&teacher.features(g.value(v)).unwrap());
            r::feature_per_item(&real_taps, &t).iter().zip(it).map(|(a, b)| a + b).collect()
        })
        .collect();
    let argmin = |terms: &[Vec<f64>], item: usize| -> (usize, f64) {
        (0..n)
            .map(|p| (p, terms[p][item]))
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    };
    let mut min1 = 0.0;
    let mut min2 = 0.0;
    for item in 0..b {
        let (p1, v1) = argmin(&image_terms, item);
        let (p2, v2) = argmin(&stage2_terms, item);
        if d1.choice[item] != p1 || d2.choice[item] != p2 {
            return Err(format!(
                "n={n} item {item}: chose ({}, {}), exhaustive ({p1}, {p2})",
                d1.choice[item], d2.choice[item]
            ));
        }
        min1 += v1 / b as f64;
        min2 += v2 / b as f64;
    }
    let close = |a: f32, b: f64| (f64::from(a) - b).abs() <= 1e-5 * b.abs().max(1.0);
    if !close(image1, min1) || !close(total2, min2) {
        return Err(format!("n={n}: min values {image1}/{total2} vs exhaustive {min1}/{min2}"));
    }
    Ok(b)
}

pub fn reductions() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for seed in [3, 4] {
        if let Err(e) = reduction_identity(seed) {
            pass = false;
            notes.push(e);
        }
    }
    let mut items = 0;
    for n in 2..=4 {
        match argmin_matches(n, 10 + n as u64) {
            Ok(k) => items += k,
            Err(e) => {
                pass = false;
                notes.push(e);
            }
        }
    }
    notes.insert(
        0,
        format!("n=1 losses and gradients bit-identical; argmin agrees on {items} items for n=2..4"),
    );
    Verdict::new(pass, notes.join("; "))
}

/// 64 pairs from the smoke configuration.
pub fn smoke_set(seed: u64) -> sdn::distill::TrainingSet {
    let b = Benchmark::render(&ShapesConfig::smoke(seed), 0.75, seed).unwrap();
    let mut all = b.train.clone();
    let (n1, n2) = (b.train.len(), b.test.len());
    let e = [b.train.embeddings.data(), b.test.embeddings.data()].concat();
    let i = [b.train.images.data(), b.test.images.data()].concat();
    let mut es = b.train.embeddings.shape().to_vec();
    es[0] = n1 + n2;
    let mut is = b.train.images.shape().to_vec();
    is[0] = n1 + n2;
    all.embeddings = Tensor::new(&es, e).unwrap();
    all.images = Tensor::new(&is, i).unwrap();
    all
}

pub struct Smoke {
    pub first: f32,
    pub best: f32,
    pub steps: usize,
    pub deterministic: bool,
    pub sdn_epochs: Vec<String>,
    pub seconds: f64,
}

pub fn smoke_run() -> Smoke {
    let start = Instant::now();
    let teacher = frozen_teacher(0);
    let data = smoke_set(5);
    let per_epoch = data.len().div_ceil(12);
    let epochs = SMOKE_STEPS / per_epoch;
    let cfg = TrainConfig {
        mode: LossMode::ImageOnly,
        epochs_stage1: epochs,
        epochs_stage2: 0,
        lr: 1e-3,
        seed: 5,
        ..Default::default()
    };
    let mut gen = GeneratorNet::build(teacher.spec(), 32, 1, 5).unwrap();
    let report = train_on(&teacher, &mut gen, &data, &cfg).unwrap();
    let totals: Vec<f32> = report.epochs.iter().map(|e| e.total).collect();

    let sdn = |seed: u64| -> TrainReport {
        let cfg = TrainConfig {
            mode: LossMode::Sdn,
            epochs_stage1: 1,
            epochs_stage2: 1,
            lr: 1e-3,
            seed,
            ..Default::default()
        };
        let mut gen = GeneratorNet::build(teacher.spec(), 32, 1, seed).unwrap();
        train_on(&teacher, &mut gen, &data, &cfg).unwrap()
    };
    let (a, b) = (sdn(9), sdn(9));
    Smoke {
        first: totals[0],
        best: totals.iter().copied().fold(f32::INFINITY, f32::min),
        steps: report.steps,
        deterministic: a.generator_checksum == b.generator_checksum,
        sdn_epochs: a.epochs.iter().map(|e| e.phase.to_string()).collect(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn training_smoke() -> Verdict {
    let s = smoke_run();
    let drop = 1.0 - f64::from(s.best) / f64::from(s.first);
    Verdict::new(
        drop >= SMOKE_DROP
            && s.steps <= SMOKE_STEPS
            && s.deterministic
            && s.sdn_epochs == ["stage1", "stage2"]
            && s.seconds < SMOKE_SECONDS,
        format!(
            "image-only loss {:.4} → {:.4} ({:.0}% drop) in {} steps; sdn 1+1 phases {:?}, checksum repeatable: {}; {:.0}s",
            s.first,
            s.best,
            100.0 * drop,
            s.steps,
            s.sdn_epochs,
            s.deterministic,
            s.seconds
        ),
    )
}

pub fn ablation_config(mode: LossMode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        epochs_stage1: ABLATION_EPOCHS,
        epochs_stage2: ABLATION_EPOCHS,
        lr: ABLATION_LR,
        n_outputs: if mode.is_diverse() { DIVERSE_OUTPUTS } else { 1 },
        seed,
        ..Default::default()
    }
}

pub struct SeedRuns {
    pub seed: u64,
    pub image_only: ModeRun,
    pub sdn: ModeRun,
}

pub fn ablation_runs(teacher: &TeacherNet) -> Vec<SeedRuns> {
    ABLATION_SEEDS
        .iter()
        .map(|&seed| {
            let bench = Benchmark::standard(seed).unwrap();
            let image_only = run_mode(teacher, &bench, &ablation_config(LossMode::ImageOnly, seed)).unwrap();
            let sdn = run_mode(teacher, &bench, &ablation_config(LossMode::Sdn, seed)).unwrap();
            SeedRuns {
                seed,
                image_only,
                sdn,
            }
        })
        .collect()
}

pub fn ablation(runs: &[SeedRuns]) -> Verdict {
    let mut detail = String::new();
    let (mut is_wins, mut ssim_wins, mut secs) = (0, 0, 0.0);
    for r in runs {
        let is_win = r.image_only.inception() < r.sdn.inception();
        let ssim_win = r.image_only.eval.mean_ssim < r.sdn.eval.mean_ssim;
        is_wins += usize::from(is_win);
        ssim_wins += usize::from(ssim_win);
        secs += r.image_only.seconds + r.sdn.seconds;
        let _ = write!(
            detail,
            "seed {}: IS {:.3} vs {:.3}, SSIM {:.3} vs {:.3}, FSIM {:.3} vs {:.3}; ",
            r.seed,
            r.image_only.inception(),
            r.sdn.inception(),
            r.image_only.eval.mean_ssim,
            r.sdn.eval.mean_ssim,
            r.image_only.eval.mean_fsim,
            r.sdn.eval.mean_fsim
        );
    }
    let _ = write!(
        detail,
        "image-only vs sdn; image-only < sdn: IS {is_wins}/{n}, SSIM {ssim_wins}/{n}; {secs:.0}s",
        n = runs.len()
    );
    Verdict::new(
        is_wins >= ABLATION_MIN_WINS && ssim_wins >= ABLATION_MIN_WINS && secs < ABLATION_SECONDS,
        detail,
    )
}

pub fn diversity_criterion(teacher: &TeacherNet) -> Verdict {
    let bench = Benchmark::standard(ABLATION_SEEDS[0]).unwrap();
    let run = run_mode(teacher, &bench, &ablation_config(LossMode::DiverseSdn, ABLATION_SEEDS[0])).unwrap();
    let stats = diversity(&run.generator, &bench.test.embeddings, DIVERSE_THRESHOLD).unwrap();
    let mut d = stats.max_pairwise.clone();
    d.sort_by(f64::total_cmp);
    Verdict::new(
        stats.fraction_diverse >= DIVERSE_FRACTION,
        format!(
            "n={DIVERSE_OUTPUTS}: {:.0}% of {} test embeddings have an output pair > {DIVERSE_THRESHOLD}; \
             max pairwise distance min {:.3} median {:.3}; {:.0}s",
            100.0 * stats.fraction_diverse,
            d.len(),
            d[0],
            d[d.len() / 2],
            run.seconds
        ),
    )
}

pub fn toy_manifest(rng: &mut ChaCha8Rng, classes: usize, per_class: usize) -> DatasetManifest {
    let mut records = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            let i = records.len();
            records.push(Record {
                id: format!("{i:06}"),
                image_path: PathBuf::from(format!("images/{i:06}.ppm")),
                class_id: c,
                embedding: vec![rng.random_range(-1.0..1.0); 2],
            });
        }
    }
    DatasetManifest {
        root: PathBuf::new(),
        resolution: 8,
        embed_dim: 2,
        class_names: (0..classes).map(|c| format!("c{c}")).collect(),
        records,
    }
}

/// Partition checks on one random split; returns the class counts.
pub fn check_split(m: &DatasetManifest, fraction: f64, seed: u64) -> Result<(usize, usize), String> {
    let (train, test) = split_zero_shot(m, fraction, seed).map_err(|e| e.to_string())?;
    let tc: BTreeSet<usize> = train.records.iter().map(|r| r.class_id).collect();
    let sc: BTreeSet<usize> = test.records.iter().map(|r| r.class_id).collect();
    if !tc.is_disjoint(&sc) {
        return Err(format!("classes shared: {:?}", tc.intersection(&sc).collect::<Vec<_>>()));
    }
    let ids = |d: &DatasetManifest| d.records.iter().map(|r| r.id.clone()).collect::<BTreeSet<_>>();
    let (a, b, all) = (ids(&train), ids(&test), ids(m));
    if !a.is_disjoint(&b) || a.union(&b).cloned().collect::<BTreeSet<_>>() != all {
        return Err("record ids do not partition the manifest".into());
    }
    let k = m.present_classes().len();
    if tc.len() != train_class_count(k, fraction) || tc.len() + sc.len() != k {
        return Err(format!("{k} classes at {fraction} gave {}/{}", tc.len(), sc.len()));
    }
    Ok((tc.len(), sc.len()))
}

pub fn zero_shot() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();
    for _ in 0..ZERO_SHOT_CONFIGS {
        let classes = rng.random_range(2..40);
        let per = rng.random_range(1..5);
        let fraction = rng.random_range(0.0..=1.0);
        let m = toy_manifest(&mut rng, classes, per);
        if let Err(e) = check_split(&m, fraction, rng.random()) {
            failures.push(e);
        }
    }
    let large = check_split(&toy_manifest(&mut rng, 200, 2), 0.75, 0);
    let standard = check_split(&toy_manifest(&mut rng, 8, 50), 0.75, 1);
    Verdict::new(
        failures.is_empty() && large == Ok((150, 50)) && standard == Ok((6, 2)),
        format!(
            "{ZERO_SHOT_CONFIGS} random configs, {} failures {:?}; 200 classes at 0.75 → {large:?}; 8 at 0.75 → {standard:?}",
            failures.len(),
            failures.first()
        ),
    )
}

pub fn retrieval(teacher: &TeacherNet, bench: &Benchmark) -> Verdict {
    let feats = deep_features(teacher, &bench.train.images).unwrap();
    let index = FeatureIndex::from_features(bench.train_ids.clone(), feats.clone()).unwrap();
    let step = (bench.train.len() / RETRIEVAL_QUERIES).max(1);
    let mut worst = f64::INFINITY;
    let mut misses = Vec::new();
    for q in (0..bench.train.len()).step_by(step).take(RETRIEVAL_QUERIES) {
        let hits = index.query(&feats[q], 1).unwrap();
        worst = worst.min(hits[0].similarity);
        if hits[0].id != bench.train_ids[q] || hits[0].similarity < RETRIEVAL_SIMILARITY {
            misses.push(bench.train_ids[q].clone());
        }
    }
    Verdict::new(
        misses.is_empty(),
        format!(
            "{RETRIEVAL_QUERIES} queries over {} training images: rank-1 misses {misses:?}, lowest self-similarity {worst:.9}",
            index.len()
        ),
    )
}

pub fn interpolation(gen: &GeneratorNet, embeddings: &Tensor) -> Verdict {
    let e = embeddings.shape()[1];
    let row = |i: usize| embeddings.data()[i * e..(i + 1) * e].to_vec();
    let mut pairs = 0;
    let mut pass = true;
    for (i, j) in [(0, 1), (2, embeddings.shape()[0] - 1), (3, 7)] {
        let (e1, e2) = (row(i), row(j));
        let path = interpolation_images(gen, &e1, &e2, 6).unwrap();
        let direct = |v: &[f32]| gen.generate(&Tensor::new(&[e], v.to_vec()).unwrap()).unwrap().images[0].clone();
        let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        pass &= bits(&path[0]) == bits(&direct(&e1)) && bits(path.last().unwrap()) == bits(&direct(&e2));
        pairs += 1;
    }
    Verdict::new(
        pass,
        format!("{pairs} embedding pairs, 6 steps: α=0 and α=1 bit-identical to direct generation: {pass}"),
    )
}
