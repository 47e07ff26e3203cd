//! Straight-line f64 re-implementations of the forward ops, written from
//! their definitions and used as finite-difference oracles.

use std::cell::Cell;

use sdn::nets::{GenStep, GeneratorNet, TeacherNet};
use sdn::tensor::Tensor;

thread_local! {
    static MARGIN: Cell<f64> = const { Cell::new(f64::INFINITY) };
}

/// Start tracking the closest approach to a non-differentiable point
/// (ReLU at 0, |·| at 0, a max-pool tie).
pub fn reset_margin() {
    MARGIN.with(|m| m.set(f64::INFINITY));
}

pub fn margin() -> f64 {
    MARGIN.with(Cell::get)
}

fn near(v: f64) {
    MARGIN.with(|m| m.set(m.get().min(v.abs())));
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self::new(t.shape(), t.data().iter().map(|&v| f64::from(v)).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&self.shape, self.data.iter().map(|&v| v as f32).collect()).unwrap()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(&self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `(batch, h, w, c)` of an `[H,W,C]` or `[B,H,W,C]` array.
    fn image(&self) -> (usize, usize, usize, usize) {
        match self.shape[..] {
            [h, w, c] => (1, h, w, c),
            [b, h, w, c] => (b, h, w, c),
            ref s => panic!("not an image: {s:?}"),
        }
    }

    fn with_hwc(&self, h: usize, w: usize, c: usize) -> Vec<usize> {
        let mut s = self.shape.clone();
        let r = s.len();
        s[r - 3] = h;
        s[r - 2] = w;
        s[r - 1] = c;
        s
    }
}

/// 3×3 same-padded correlation; kernel `[3, 3, Cin, Cout]`.
pub fn conv3(x: &Arr, k: &Arr, bias: &Arr) -> Arr {
    let (b, h, w, cin) = x.image();
    let cout = k.shape[3];
    let mut out = vec![0.0; b * h * w * cout];
    for n in 0..b {
        for y in 0..h {
            for xx in 0..w {
                for o in 0..cout {
                    let mut s = bias.data[o];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for i in 0..cin {
                                let xv = x.data[((n * h + sy as usize) * w + sx as usize) * cin + i];
                                s += xv * k.data[((ky * 3 + kx) * cin + i) * cout + o];
                            }
                        }
                    }
                    out[((n * h + y) * w + xx) * cout + o] = s;
                }
            }
        }
    }
    Arr::new(&x.with_hwc(h, w, cout), out)
}

/// `x [N] | [B, N]`, `w [N, M]`, `b [M]`.
pub fn linear(x: &Arr, wt: &Arr, bias: &Arr) -> Arr {
    let (n_in, n_out) = (wt.shape[0], wt.shape[1]);
    let rows = x.data.len() / n_in;
    let mut out = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        for j in 0..n_out {
            let mut s = bias.data[j];
            for i in 0..n_in {
                s += x.data[r * n_in + i] * wt.data[i * n_out + j];
            }
            out.push(s);
        }
    }
    let shape = if x.shape.len() == 1 { vec![n_out] } else { vec![rows, n_out] };
    Arr::new(&shape, out)
}

pub fn relu(x: &Arr) -> Arr {
    x.map(|v| {
        near(v);
        v.max(0.0)
    })
}

pub fn sigmoid(x: &Arr) -> Arr {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn maxpool2(x: &Arr) -> Arr {
    let (b, h, w, c) = x.image();
    let mut out = Vec::new();
    for n in 0..b {
        for y in 0..h / 2 {
            for xx in 0..w / 2 {
                for ch in 0..c {
                    let mut v: Vec<f64> = (0..4)
                        .map(|d| x.data[((n * h + 2 * y + d / 2) * w + 2 * xx + d % 2) * c + ch])
                        .collect();
                    v.sort_by(|a, b| b.total_cmp(a));
                    near(v[0] - v[1]);
                    out.push(v[0]);
                }
            }
        }
    }
    Arr::new(&x.with_hwc(h / 2, w / 2, c), out)
}

pub fn upsample2(x: &Arr) -> Arr {
    let (b, h, w, c) = x.image();
    let mut out = Vec::new();
    for n in 0..b {
        for y in 0..2 * h {
            for xx in 0..2 * w {
                for ch in 0..c {
                    out.push(x.data[((n * h + y / 2) * w + xx / 2) * c + ch]);
                }
            }
        }
    }
    Arr::new(&x.with_hwc(2 * h, 2 * w, c), out)
}

pub fn slice_channels(x: &Arr, start: usize, n: usize) -> Arr {
    let c = *x.shape.last().unwrap();
    let data = x
        .data
        .chunks(c)
        .flat_map(|px| px[start..start + n].to_vec())
        .collect();
    let mut s = x.shape.clone();
    *s.last_mut().unwrap() = n;
    Arr::new(&s, data)
}

pub fn l1_mean(a: &Arr, b: &Arr) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| abs(x - y)).sum::<f64>() / a.data.len() as f64
}

pub fn l1_per_item(a: &Arr, b: &Arr) -> Vec<f64> {
    let n = a.shape[0];
    let inner = a.data.len() / n;
    (0..n)
        .map(|i| {
            let r = i * inner..(i + 1) * inner;
            a.data[r.clone()].iter().zip(&b.data[r]).map(|(x, y)| abs(x - y)).sum::<f64>() / inner as f64
        })
        .collect()
}

/// Smallest value, noting how close the runner-up is.
pub fn min_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.len() > 1 {
        near(v[1] - v[0]);
    }
    v[0]
}

/// Exact zeros come from two dead ReLUs and stay put under perturbation.
fn abs(v: f64) -> f64 {
    if v != 0.0 {
        near(v);
    }
    v.abs()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean softmax cross-entropy of `[B, K]` logits.
pub fn cross_entropy(logits: &Arr, labels: &[usize]) -> f64 {
    let k = *logits.shape.last().unwrap();
    let mut total = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        let row = &logits.data[r * k..(r + 1) * k];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[l];
    }
    total / labels.len() as f64
}

/// Named f64 copies of a network's parameters.
pub fn params_of<'a>(params: impl IntoIterator<Item = &'a sdn::tensor::Param>) -> Vec<(String, Arr)> {
    params
        .into_iter()
        .map(|p| (p.name().to_string(), Arr::from_tensor(p.value())))
        .collect()
}

fn get<'a>(params: &'a [(String, Arr)], name: &str) -> &'a Arr {
    &params.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no {name}")).1
}

/// Teacher conv stack: post-ReLU activations of the tapped layers, in
/// depth order.
pub fn teacher_taps(net: &TeacherNet, params: &[(String, Arr)], image: &Arr) -> Vec<(String, Arr)> {
    let spec = net.spec();
    let mut x = image.clone();
    let mut taps = Vec::new();
    let layers = spec.conv_layers();
    let mut k = 0;
    for convs in &spec.groups {
        for _ in convs {
            let name = &layers[k].name;
            x = relu(&conv3(&x, get(params, &format!("{name}.w")), get(params, &format!("{name}.b"))));
            if spec.taps.contains(name) {
                taps.push((name.clone(), x.clone()));
            }
            k += 1;
        }
        x = maxpool2(&x);
    }
    taps
}

/// Generator on `[B, E]` embeddings: taps keyed by teacher layer, and the
/// `n` output images.
pub fn generator_forward(
    net: &GeneratorNet,
    params: &[(String, Arr)],
    emb: &Arr,
) -> (Vec<(String, Arr)>, Vec<Arr>) {
    let layout = net.layout();
    let b = emb.shape[0];
    let mut x = emb.clone();
    for name in ["g_fc7", "g_fc6"] {
        x = relu(&linear(&x, get(params, &format!("{name}.w")), get(params, &format!("{name}.b"))));
    }
    let s = layout.seed_shape;
    x = Arr::new(&[b, s[0], s[1], s[2]], x.data);
    let n_conv = layout.conv_count();
    let mut k = 0;
    let mut after = Vec::new();
    for step in &layout.steps {
        x = match step {
            GenStep::Upsample => upsample2(&x),
            GenStep::Conv { name, .. } => {
                k += 1;
                let y = conv3(&x, get(params, &format!("{name}.w")), get(params, &format!("{name}.b")));
                if k == n_conv { sigmoid(&y) } else { relu(&y) }
            }
        };
        after.push(x.clone());
    }
    let taps = layout
        .taps
        .iter()
        .map(|t| (t.teacher_layer.clone(), after[t.after_step].clone()))
        .collect();
    let images = (0..layout.n_outputs).map(|p| slice_channels(&x, 3 * p, 3)).collect();
    (taps, images)
}

/// Per-item `Σ_l mean|a_l − b_l|` over taps paired by name.
pub fn feature_per_item(reference: &[(String, Arr)], other: &[(String, Arr)]) -> Vec<f64> {
    let mut acc = vec![0.0; reference[0].1.shape[0]];
    for (name, r) in reference {
        let o = &other.iter().find(|(n, _)| n == name).expect("paired tap").1;
        for (a, v) in acc.iter_mut().zip(l1_per_item(r, o)) {
            *a += v;
        }
    }
    acc
}
