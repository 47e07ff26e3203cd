//! Analytic (f32 tape) gradients against central differences of the f64
//! reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdn::distill::{
    diverse_stage1_loss, diverse_stage2_loss, image_only_loss, stage1_loss, stage2_loss, RealTarget,
    TapWeights,
};
use sdn::nets::{GeneratorNet, NetSpec, TeacherNet};
use sdn::tensor::{Graph, Tensor, Var};

use super::reference::{self as r, Arr};

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub rel_err: f64,
    pub value_err: f64,
    pub coords: usize,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.rel_err < TOLERANCE && self.value_err < 1e-5
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Central differences of `f` over every coordinate of every input.
pub fn numeric(inputs: &[Arr], f: &dyn Fn(&[Arr]) -> f64) -> Vec<f64> {
    let mut work = inputs.to_vec();
    let mut out = Vec::new();
    for i in 0..work.len() {
        for j in 0..work[i].data.len() {
            let x0 = work[i].data[j];
            work[i].data[j] = x0 + STEP;
            let up = f(&work);
            work[i].data[j] = x0 - STEP;
            let down = f(&work);
            work[i].data[j] = x0;
            out.push((up - down) / (2.0 * STEP));
        }
    }
    out
}

/// Record `build` on fresh leaves for `inputs`, back-propagate, and
/// compare against the reference `f`.
pub fn check_op(
    name: &str,
    inputs: &[Arr],
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
    f: &dyn Fn(&[Arr]) -> f64,
) -> Check {
    let mut g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|a| g.leaf(a.to_tensor(), true)).collect();
    let loss = build(&mut g, &leaves);
    let value = f64::from(g.value(loss).item());
    g.backward(loss).unwrap();
    let analytic: Vec<f64> = leaves
        .iter()
        .flat_map(|&v| g.grad(v).unwrap().data().iter().map(|&x| f64::from(x)).collect::<Vec<_>>())
        .collect();
    let exact = f(inputs);
    Check {
        name: name.to_string(),
        rel_err: rel_err(&analytic, &numeric(inputs, f)),
        value_err: (value - exact).abs() / exact.abs().max(1.0),
        coords: analytic.len(),
    }
}

/// Fixed random weights that turn any output into a scalar.
pub struct Probe {
    weights: Vec<f64>,
}

impl Probe {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weights: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    pub fn graph(&self, g: &mut Graph, out: Var) -> Var {
        let n = self.weights.len();
        let flat = g.reshape(out, &[1, n]).unwrap();
        let w = g.constant(Arr::new(&[n, 1], self.weights.clone()).to_tensor());
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.linear(flat, w, b).unwrap();
        g.sum(y).unwrap()
    }

    pub fn reference(&self, out: &Arr) -> f64 {
        out.data.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Arr {
    let n = shape.iter().product();
    Arr::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Values bounded away from zero by `gap`.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Arr {
    let a = uniform(rng, shape, gap, 1.0);
    a.map(|v| if rng_sign(v) { v } else { -v })
}

fn rng_sign(v: f64) -> bool {
    ((v * 1e6) as u64).is_multiple_of(2)
}

/// A shuffled grid of well-separated values (no ties within `gap`).
pub fn distinct(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Arr {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * gap).collect();
    v.shuffle(rng);
    Arr::new(shape, v)
}

/// Every differentiable tape op.
pub fn op_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let x = uniform(&mut rng, &[2, 4, 4, 2], -1.0, 1.0);
    let k = uniform(&mut rng, &[3, 3, 2, 3], -0.5, 0.5);
    let b = uniform(&mut rng, &[3], -0.5, 0.5);
    let p = Probe::new(2 * 4 * 4 * 3, &mut rng);
    out.push(check_op(
        "conv2d",
        &[x, k, b],
        &|g, v| {
            let y = g.conv2d(v[0], v[1], v[2]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::conv3(&a[0], &a[1], &a[2])),
    ));

    let x = uniform(&mut rng, &[3, 5], -1.0, 1.0);
    let w = uniform(&mut rng, &[5, 4], -1.0, 1.0);
    let b = uniform(&mut rng, &[4], -1.0, 1.0);
    let p = Probe::new(12, &mut rng);
    out.push(check_op(
        "linear",
        &[x, w, b],
        &|g, v| {
            let y = g.linear(v[0], v[1], v[2]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::linear(&a[0], &a[1], &a[2])),
    ));

    let x = away_from_zero(&mut rng, &[2, 3, 4], 0.05);
    let p = Probe::new(24, &mut rng);
    out.push(check_op(
        "relu",
        &[x],
        &|g, v| {
            let y = g.relu(v[0]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::relu(&a[0])),
    ));

    let x = uniform(&mut rng, &[2, 3, 4], -3.0, 3.0);
    let p = Probe::new(24, &mut rng);
    out.push(check_op(
        "sigmoid",
        &[x],
        &|g, v| {
            let y = g.sigmoid(v[0]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::sigmoid(&a[0])),
    ));

    let x = distinct(&mut rng, &[2, 4, 4, 2], 0.05);
    let p = Probe::new(16, &mut rng);
    out.push(check_op(
        "maxpool2",
        &[x],
        &|g, v| {
            let y = g.maxpool2(v[0]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::maxpool2(&a[0])),
    ));

    let x = uniform(&mut rng, &[2, 2, 3], -1.0, 1.0);
    let p = Probe::new(48, &mut rng);
    out.push(check_op(
        "upsample_nearest2",
        &[x],
        &|g, v| {
            let y = g.upsample_nearest2(v[0]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::upsample2(&a[0])),
    ));

    let a0 = uniform(&mut rng, &[3, 2, 2, 2], -1.0, 1.0);
    let d = away_from_zero(&mut rng, &[3, 2, 2, 2], 0.05);
    let b0 = Arr::new(&a0.shape, a0.data.iter().zip(&d.data).map(|(x, y)| x + y).collect());
    out.push(check_op(
        "l1_mean",
        &[a0.clone(), b0.clone()],
        &|g, v| g.l1_mean(v[0], v[1]).unwrap(),
        &|a| r::l1_mean(&a[0], &a[1]),
    ));
    let p = Probe::new(3, &mut rng);
    out.push(check_op(
        "l1_mean_per_item",
        &[a0, b0],
        &|g, v| {
            let y = g.l1_mean_per_item(v[0], v[1]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&Arr::new(&[3], r::l1_per_item(&a[0], &a[1]))),
    ));

    let all = distinct(&mut rng, &[3, 6], 0.05);
    let parts: Vec<Arr> = (0..3).map(|i| Arr::new(&[6], all.data[i * 6..(i + 1) * 6].to_vec())).collect();
    let p = Probe::new(6, &mut rng);
    out.push(check_op(
        "min_across",
        &parts,
        &|g, v| {
            let (y, _) = g.min_across(v).unwrap();
            p.graph(g, y)
        },
        &|a| {
            let m: Vec<f64> = (0..6).map(|e| r::min_of(&a.iter().map(|x| x.data[e]).collect::<Vec<_>>())).collect();
            p.reference(&Arr::new(&[6], m))
        },
    ));

    let x = uniform(&mut rng, &[2, 5], -1.0, 1.0);
    out.push(check_op("mean", std::slice::from_ref(&x), &|g, v| g.mean(v[0]).unwrap(), &|a| r::mean(&a[0].data)));
    let p = Probe::new(10, &mut rng);
    out.push(check_op(
        "sum",
        std::slice::from_ref(&x),
        &|g, v| {
            let s = g.scale(v[0], 1.0).unwrap();
            let y = g.add(s, v[0]).unwrap();
            let z = p.graph(g, y);
            let t = g.sum(v[0]).unwrap();
            g.add(z, t).unwrap()
        },
        &|a| 2.0 * p.reference(&a[0]) + a[0].data.iter().sum::<f64>(),
    ));
    let y = uniform(&mut rng, &[2, 5], -1.0, 1.0);
    let p = Probe::new(10, &mut rng);
    out.push(check_op(
        "add+scale",
        &[x, y],
        &|g, v| {
            let s = g.scale(v[1], -2.5).unwrap();
            let z = g.add(v[0], s).unwrap();
            p.graph(g, z)
        },
        &|a| p.reference(&Arr::new(&[2, 5], a[0].data.iter().zip(&a[1].data).map(|(u, w)| u - 2.5 * w).collect())),
    ));

    let x = uniform(&mut rng, &[2, 2, 2, 6], -1.0, 1.0);
    let p = Probe::new(16, &mut rng);
    out.push(check_op(
        "slice_channels+reshape",
        &[x],
        &|g, v| {
            let s = g.slice_channels(v[0], 2, 2).unwrap();
            let y = g.reshape(s, &[4, 4]).unwrap();
            p.graph(g, y)
        },
        &|a| p.reference(&r::slice_channels(&a[0], 2, 2)),
    ));

    let z = uniform(&mut rng, &[4, 5], -2.0, 2.0);
    let labels = [0usize, 3, 4, 1];
    out.push(check_op(
        "cross_entropy",
        &[z],
        &|g, v| g.cross_entropy(v[0], &labels).unwrap(),
        &|a| r::cross_entropy(&a[0], &labels),
    ));
    out
}

/// Two-conv teacher (one conv per group) at 4×4 and its mirror generator.
pub fn tiny_nets(n_outputs: usize, seed: u64) -> (TeacherNet, GeneratorNet) {
    let spec = NetSpec {
        resolution: 4,
        in_channels: 3,
        groups: vec![vec![2], vec![3]],
        head_hidden: vec![4],
        num_classes: 2,
        taps: vec!["conv1_1".into(), "conv2_1".into()],
    };
    let mut teacher = TeacherNet::build(spec, seed).unwrap();
    let mut gen = GeneratorNet::build(teacher.spec(), 5, n_outputs, seed + 1).unwrap();
    // zero biases would park dead units exactly on the ReLU kink
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    for p in teacher.params_mut().into_iter().chain(gen.params_mut()) {
        if p.name().ends_with(".b") {
            for v in p.value_mut().data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    teacher.freeze();
    (teacher, gen)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Composite {
    Image,
    Stage1,
    Stage2,
    DiverseStage1,
    DiverseStage2,
}

impl Composite {
    pub const ALL: [Composite; 5] = [
        Composite::Image,
        Composite::Stage1,
        Composite::Stage2,
        Composite::DiverseStage1,
        Composite::DiverseStage2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Composite::Image => "image loss",
            Composite::Stage1 => "stage I loss",
            Composite::Stage2 => "stage II loss",
            Composite::DiverseStage1 => "diverse stage I loss",
            Composite::DiverseStage2 => "diverse stage II loss",
        }
    }
}

/// Inputs closer than this to a kink (in the reference forward) are
/// redrawn.
pub const KINK_MARGIN: f64 = 2e-3;

/// Gradient of a full training loss with respect to every generator
/// parameter, through the generator (and the frozen teacher for the
/// second-stage losses). Nets and data come from the first seed at or
/// after `seed` whose forward pass stays `KINK_MARGIN` clear of every kink.
pub fn composite_check(which: Composite, seed: u64) -> Check {
    (seed..seed + 500)
        .find_map(|s| composite_at(which, s))
        .expect("a kink-free draw")
}

fn composite_at(which: Composite, seed: u64) -> Option<Check> {
    let n = match which {
        Composite::DiverseStage1 | Composite::DiverseStage2 => 3,
        _ => 1,
    };
    let (teacher, gen) = tiny_nets(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let emb = uniform(&mut rng, &[2, 5], -1.0, 1.0);
    let real = uniform(&mut rng, &[2, 4, 4, 3], 0.0, 1.0);
    let tparams = r::params_of(teacher.params());
    r::reset_margin();
    let real_taps = r::teacher_taps(&teacher, &tparams, &real);
    let names: Vec<String> = gen.params().iter().map(|p| p.name().to_string()).collect();
    let f = |arrs: &[Arr]| -> f64 {
        let params: Vec<(String, Arr)> = names.iter().cloned().zip(arrs.iter().cloned()).collect();
        let (taps, images) = r::generator_forward(&gen, &params, &emb);
        let img_terms: Vec<Vec<f64>> = images.iter().map(|i| r::l1_per_item(&real, i)).collect();
        let items = 0..emb.shape[0];
        match which {
            Composite::Image => r::mean(&img_terms[0]),
            Composite::Stage1 => {
                let f = r::feature_per_item(&real_taps, &taps);
                r::mean(&f.iter().zip(&img_terms[0]).map(|(a, b)| a + b).collect::<Vec<_>>())
            }
            Composite::Stage2 => {
                let st = r::teacher_taps(&teacher, &tparams, &images[0]);
                let f = r::feature_per_item(&real_taps, &st);
                r::mean(&f.iter().zip(&img_terms[0]).map(|(a, b)| a + b).collect::<Vec<_>>())
            }
            Composite::DiverseStage1 => {
                let f = r::feature_per_item(&real_taps, &taps);
                let per: Vec<f64> = items
                    .map(|b| f[b] + r::min_of(&img_terms.iter().map(|t| t[b]).collect::<Vec<_>>()))
                    .collect();
                r::mean(&per)
            }
            Composite::DiverseStage2 => {
                let totals: Vec<Vec<f64>> = images
                    .iter()
                    .zip(&img_terms)
                    .map(|(img, it)| {
                        let st = r::teacher_taps(&teacher, &tparams, img);
                        r::feature_per_item(&real_taps, &st).iter().zip(it).map(|(a, b)| a + b).collect()
                    })
                    .collect();
                let per: Vec<f64> = items
                    .map(|b| r::min_of(&totals.iter().map(|t| t[b]).collect::<Vec<_>>()))
                    .collect();
                r::mean(&per)
            }
        }
    };
    let inputs: Vec<Arr> = r::params_of(gen.params()).into_iter().map(|(_, a)| a).collect();
    let exact = f(&inputs);
    if r::margin() < KINK_MARGIN {
        return None;
    }

    let mut g = Graph::new();
    let vars = gen.bind(&mut g);
    let tvars = teacher.bind(&mut g);
    let target = RealTarget::new(&teacher, real.to_tensor()).unwrap().bind(&mut g).unwrap();
    let e = g.constant(emb.to_tensor());
    let pass = gen.forward(&mut g, &vars, e).unwrap();
    let w = TapWeights::Uniform;
    let loss = match which {
        Composite::Image => image_only_loss(&mut g, target.image, pass.images[0]).unwrap().total,
        Composite::Stage1 => stage1_loss(&mut g, &target, &pass.taps, pass.images[0], &w).unwrap().total,
        Composite::Stage2 => stage2_loss(&mut g, &teacher, &tvars, &target, pass.images[0], &w).unwrap().total,
        Composite::DiverseStage1 => {
            diverse_stage1_loss(&mut g, &target, &pass.taps, &pass.images, &w).unwrap().parts.total
        }
        Composite::DiverseStage2 => {
            diverse_stage2_loss(&mut g, &teacher, &tvars, &target, &pass.images, &w)
                .unwrap()
                .parts
                .total
        }
    };
    let value = f64::from(g.value(loss).item());
    g.backward(loss).unwrap();
    let analytic: Vec<f64> = vars
        .leaves()
        .flat_map(|v| g.grad(v).unwrap().data().iter().map(|&x| f64::from(x)).collect::<Vec<_>>())
        .collect();
    Some(Check {
        name: format!("{} (seed {seed})", which.name()),
        rel_err: rel_err(&analytic, &numeric(&inputs, &f)),
        value_err: (value - exact).abs() / exact.abs().max(1.0),
        coords: analytic.len(),
    })
}
