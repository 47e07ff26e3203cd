use super::kernels::{self, ImageDims};
use super::{Param, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Var,
        dims: ImageDims,
        cout: usize,
        cols: Vec<f32>,
    },
    Linear {
        x: Var,
        weight: Var,
        bias: Var,
        rows: usize,
        n_in: usize,
        n_out: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    Upsample2 {
        x: Var,
        dims: ImageDims,
    },
    L1Mean {
        a: Var,
        b: Var,
    },
    L1PerItem {
        a: Var,
        b: Var,
    },
    MinAcross {
        inputs: Vec<Var>,
        choice: Vec<u32>,
    },
    Mean(Var),
    Sum(Var),
    Add(Var, Var),
    Scale(Var, f32),
    Reshape(Var),
    SliceChannels {
        x: Var,
        start: usize,
        channels: usize,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f32>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, kernel, bias, .. } => vec![*x, *kernel, *bias],
            Op::Linear { x, weight, bias, .. } => vec![*x, *weight, *bias],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Mean(x)
            | Op::Sum(x)
            | Op::Scale(x, _)
            | Op::Reshape(x)
            | Op::MaxPool2 { x, .. }
            | Op::Upsample2 { x, .. }
            | Op::SliceChannels { x, .. } => vec![*x],
            Op::L1Mean { a, b } | Op::L1PerItem { a, b } | Op::Add(a, b) => vec![*a, *b],
            Op::MinAcross { inputs, .. } => inputs.clone(),
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of recorded operations. Nodes are appended in execution order, so
/// the tape is always topologically sorted; [`Graph::backward`] walks it
/// once in reverse and may only run once per graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Bind a parameter as a leaf. Frozen parameters get no gradient.
    pub fn param(&mut self, p: &Param) -> Var {
        self.leaf(p.value().clone(), p.requires_grad())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let data = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape(), data.clone()).expect("grad shape"))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn image_dims(&self, v: Var, op: &str) -> Result<ImageDims> {
        match *self.value(v).shape() {
            [h, w, c] => Ok(ImageDims {
                batch: 1,
                height: h,
                width: w,
                channels: c,
            }),
            [b, h, w, c] => Ok(ImageDims {
                batch: b,
                height: h,
                width: w,
                channels: c,
            }),
            ref s => Err(Error::Shape(format!(
                "{op} expects [H,W,C] or [B,H,W,C], got {s:?}"
            ))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{op}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// Same-padded, stride-1 3×3 convolution.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let dims = self.image_dims(x, "conv2d")?;
        let (cin, cout) = match *self.value(kernel).shape() {
            [3, 3, cin, cout] => (cin, cout),
            ref s => {
                return Err(Error::Shape(format!(
                    "conv2d kernel must be [3,3,Cin,Cout], got {s:?}"
                )))
            }
        };
        if cin != dims.channels {
            return Err(Error::Shape(format!(
                "conv2d: input has {} channels, kernel expects {cin}",
                dims.channels
            )));
        }
        if self.value(bias).shape() != [cout] {
            return Err(Error::Shape(format!(
                "conv2d bias must be [{cout}], got {:?}",
                self.value(bias).shape()
            )));
        }
        let (out, cols) = kernels::conv3_forward(
            self.value(x).data(),
            dims,
            self.value(kernel).data(),
            self.value(bias).data(),
            cout,
        );
        let mut shape = self.value(x).shape().to_vec();
        *shape.last_mut().unwrap() = cout;
        let value = Tensor::new(&shape, out)?;
        let cols = if self.requires_grad(kernel) { cols } else { Vec::new() };
        self.record(
            "conv2d",
            value,
            Op::Conv2d {
                x,
                kernel,
                bias,
                dims,
                cout,
                cols,
            },
            &[x, kernel, bias],
        )
    }

    /// `out[j] = Σ_i x[i]·w[i,j] + b[j]`; `x` may be `[N]` or `[B, N]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (rows, n_in) = match *self.value(x).shape() {
            [n] => (1, n),
            [b, n] => (b, n),
            ref s => return Err(Error::Shape(format!("linear input must be [N] or [B,N], got {s:?}"))),
        };
        let n_out = match *self.value(weight).shape() {
            [n, m] if n == n_in => m,
            ref s => {
                return Err(Error::Shape(format!(
                    "linear weight {s:?} does not accept {n_in} inputs"
                )))
            }
        };
        if n_in == 0 || n_out == 0 {
            return Err(Error::Shape("linear dimensions must be ≥ 1".into()));
        }
        if self.value(bias).shape() != [n_out] {
            return Err(Error::Shape(format!(
                "linear bias must be [{n_out}], got {:?}",
                self.value(bias).shape()
            )));
        }
        let mut out = Vec::with_capacity(rows * n_out);
        for _ in 0..rows {
            out.extend_from_slice(self.value(bias).data());
        }
        kernels::gemm(
            rows,
            n_in,
            n_out,
            self.value(x).data(),
            (n_in, 1),
            self.value(weight).data(),
            (n_out, 1),
            1.0,
            &mut out,
        );
        let shape: Vec<usize> = if self.value(x).rank() == 1 {
            vec![n_out]
        } else {
            vec![rows, n_out]
        };
        let value = Tensor::new(&shape, out)?;
        self.record(
            "linear",
            value,
            Op::Linear {
                x,
                weight,
                bias,
                rows,
                n_in,
                n_out,
            },
            &[x, weight, bias],
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.record("relu", value, Op::Relu(x), &[x])
    }

    /// Logistic squash into (0, 1).
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        self.record("sigmoid", value, Op::Sigmoid(x), &[x])
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let dims = self.image_dims(x, "maxpool2")?;
        if dims.height % 2 != 0 || dims.width % 2 != 0 {
            return Err(Error::Shape(format!(
                "maxpool2 needs even spatial extent, got {}×{}",
                dims.height, dims.width
            )));
        }
        let (out, argmax) = kernels::maxpool2(self.value(x).data(), dims);
        let mut shape = self.value(x).shape().to_vec();
        let r = shape.len();
        shape[r - 3] /= 2;
        shape[r - 2] /= 2;
        let value = Tensor::new(&shape, out)?;
        self.record("maxpool2", value, Op::MaxPool2 { x, argmax }, &[x])
    }

    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let dims = self.image_dims(x, "upsample_nearest2")?;
        let out = kernels::upsample2(self.value(x).data(), dims);
        let mut shape = self.value(x).shape().to_vec();
        let r = shape.len();
        shape[r - 3] *= 2;
        shape[r - 2] *= 2;
        let value = Tensor::new(&shape, out)?;
        self.record("upsample_nearest2", value, Op::Upsample2 { x, dims }, &[x])
    }

    /// Mean over all elements of `|a − b|`.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "l1_mean")?;
        let v = kernels::mean_abs_diff(self.value(a).data(), self.value(b).data());
        self.record("l1_mean", Tensor::scalar(v), Op::L1Mean { a, b }, &[a, b])
    }

    /// Per-item mean absolute difference along the leading dimension:
    /// `[B, ...]` × `[B, ...]` → `[B]`.
    pub fn l1_mean_per_item(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "l1_mean_per_item")?;
        let batch = *self
            .value(a)
            .shape()
            .first()
            .ok_or_else(|| Error::Shape("l1_mean_per_item needs a leading dimension".into()))?;
        let inner = self.value(a).len() / batch.max(1);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let out: Vec<f32> = (0..batch)
            .map(|i| {
                let r = i * inner..(i + 1) * inner;
                kernels::mean_abs_diff(&da[r.clone()], &db[r])
            })
            .collect();
        let value = Tensor::new(&[batch], out)?;
        self.record("l1_mean_per_item", value, Op::L1PerItem { a, b }, &[a, b])
    }

    /// Element-wise minimum across equally shaped inputs. Returns the result
    /// and, per element, the index of the chosen input (lowest index on
    /// ties). Gradient flows only into the chosen input.
    pub fn min_across(&mut self, inputs: &[Var]) -> Result<(Var, Vec<usize>)> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Shape("min_across of zero inputs".into()))?;
        for &v in &inputs[1..] {
            self.same_shape(first, v, "min_across")?;
        }
        let n = self.value(first).len();
        let mut out = self.value(first).data().to_vec();
        let mut choice = vec![0u32; n];
        for (p, &v) in inputs.iter().enumerate().skip(1) {
            for (e, &x) in self.value(v).data().iter().enumerate() {
                if x < out[e] {
                    out[e] = x;
                    choice[e] = p as u32;
                }
            }
        }
        let value = Tensor::new(self.value(first).shape(), out)?;
        let chosen = choice.iter().map(|&c| c as usize).collect();
        let var = self.record(
            "min_across",
            value,
            Op::MinAcross {
                inputs: inputs.to_vec(),
                choice,
            },
            inputs,
        )?;
        Ok((var, chosen))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::Shape("mean of an empty tensor".into()));
        }
        let s: f64 = t.data().iter().map(|&v| f64::from(v)).sum();
        let v = (s / t.len() as f64) as f32;
        self.record("mean", Tensor::scalar(v), Op::Mean(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|&v| f64::from(v)).sum();
        self.record("sum", Tensor::scalar(s as f32), Op::Sum(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        self.record("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Result<Var> {
        let value = self.value(x).map(|v| v * factor);
        self.record("scale", value, Op::Scale(x, factor), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        self.record("reshape", value, Op::Reshape(x), &[x])
    }

    /// Channels `start..start + channels` of the last dimension.
    pub fn slice_channels(&mut self, x: Var, start: usize, channels: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let c = *shape
            .last()
            .ok_or_else(|| Error::Shape("slice_channels on a scalar".into()))?;
        if channels == 0 || start + channels > c {
            return Err(Error::Shape(format!(
                "slice_channels {start}..{} out of {c}",
                start + channels
            )));
        }
        let data: Vec<f32> = self
            .value(x)
            .data()
            .chunks_exact(c)
            .flat_map(|px| px[start..start + channels].iter().copied())
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = channels;
        let value = Tensor::new(&out_shape, data)?;
        self.record(
            "slice_channels",
            value,
            Op::SliceChannels { x, start, channels },
            &[x],
        )
    }

    /// Mean softmax cross-entropy of `[B, K]` (or `[K]`) logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (rows, k) = match *self.value(logits).shape() {
            [k] => (1, k),
            [b, k] => (b, k),
            ref s => return Err(Error::Shape(format!("cross_entropy logits {s:?}"))),
        };
        if labels.len() != rows || labels.iter().any(|&l| l >= k) {
            return Err(Error::Shape(format!(
                "cross_entropy: {} labels for {rows} rows of {k} classes",
                labels.len()
            )));
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(rows * k);
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            let row = &z[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let sum: f64 = row.iter().map(|&v| f64::from(v - max).exp()).sum();
            let lse = f64::from(max) + sum.ln();
            total += lse - f64::from(row[label]);
            probs.extend(row.iter().map(|&v| (f64::from(v - max).exp() / sum) as f32));
        }
        let value = Tensor::scalar((total / rows as f64) as f32);
        self.record(
            "cross_entropy",
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Reverse-mode pass from a scalar loss. Populates [`Graph::grad`] for
    /// every reachable leaf that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "graph already consumed by a backward pass; rebuild it".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0] = Some(vec![1.0]);
        let mut reached = vec![false; self.nodes.len()];
        reached[loss.0] = true;
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad || !reached[i] {
                continue;
            }
            for v in node.op.inputs() {
                reached[v.0] = true;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, &gout, &mut grads);
        }
        // leaves behind an unselected min branch still get a (zero) gradient
        for (i, node) in self.nodes.iter().enumerate() {
            if reached[i] && node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, node: &Node, gout: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                kernel,
                bias,
                dims,
                cout,
                cols,
            } => {
                let g = kernels::conv3_backward(
                    gout,
                    *dims,
                    cols,
                    self.value(*kernel).data(),
                    *cout,
                    (needs(*x), needs(*kernel), needs(*bias)),
                );
                accumulate(grads, *x, g.input);
                accumulate(grads, *kernel, g.kernel);
                accumulate(grads, *bias, g.bias);
            }
            Op::Linear {
                x,
                weight,
                bias,
                rows,
                n_in,
                n_out,
            } => {
                let (rows, n_in, n_out) = (*rows, *n_in, *n_out);
                if needs(*x) {
                    let mut dx = vec![0.0; rows * n_in];
                    let w = self.value(*weight).data();
                    kernels::gemm(rows, n_out, n_in, gout, (n_out, 1), w, (1, n_out), 0.0, &mut dx);
                    accumulate(grads, *x, Some(dx));
                }
                if needs(*weight) {
                    let mut dw = vec![0.0; n_in * n_out];
                    let xv = self.value(*x).data();
                    kernels::gemm(n_in, rows, n_out, xv, (1, n_in), gout, (n_out, 1), 0.0, &mut dw);
                    accumulate(grads, *weight, Some(dw));
                }
                if needs(*bias) {
                    let mut db = vec![0.0f32; n_out];
                    for row in gout.chunks_exact(n_out) {
                        for (a, b) in db.iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                    accumulate(grads, *bias, Some(db));
                }
            }
            Op::Relu(x) => {
                let out = node.value.data();
                let dx = gout
                    .iter()
                    .zip(out)
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Some(dx));
            }
            Op::Sigmoid(x) => {
                let out = node.value.data();
                let dx = gout.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(grads, *x, Some(dx));
            }
            Op::MaxPool2 { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (g, &i) in gout.iter().zip(argmax) {
                    dx[i as usize] += g;
                }
                accumulate(grads, *x, Some(dx));
            }
            Op::Upsample2 { x, dims } => {
                accumulate(grads, *x, Some(kernels::upsample2_backward(gout, *dims)));
            }
            Op::L1Mean { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let s = gout[0] / av.len() as f32;
                let da: Vec<f32> = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| kernels::sign(x - y) * s)
                    .collect();
                if needs(*b) {
                    accumulate(grads, *b, Some(da.iter().map(|v| -v).collect()));
                }
                if needs(*a) {
                    accumulate(grads, *a, Some(da));
                }
            }
            Op::L1PerItem { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let inner = av.len() / gout.len();
                let da: Vec<f32> = av
                    .iter()
                    .zip(bv)
                    .enumerate()
                    .map(|(e, (x, y))| kernels::sign(x - y) * gout[e / inner] / inner as f32)
                    .collect();
                if needs(*b) {
                    accumulate(grads, *b, Some(da.iter().map(|v| -v).collect()));
                }
                if needs(*a) {
                    accumulate(grads, *a, Some(da));
                }
            }
            Op::MinAcross { inputs, choice } => {
                for (p, &v) in inputs.iter().enumerate() {
                    if !needs(v) || !choice.iter().any(|&c| c as usize == p) {
                        continue;
                    }
                    let d = gout
                        .iter()
                        .zip(choice)
                        .map(|(g, &c)| if c as usize == p { *g } else { 0.0 })
                        .collect();
                    accumulate(grads, v, Some(d));
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                accumulate(grads, *x, Some(vec![gout[0] / n as f32; n]));
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                accumulate(grads, *x, Some(vec![gout[0]; n]));
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, Some(gout.to_vec()));
                }
                if needs(*b) {
                    accumulate(grads, *b, Some(gout.to_vec()));
                }
            }
            Op::Scale(x, f) => {
                accumulate(grads, *x, Some(gout.iter().map(|g| g * f).collect()));
            }
            Op::Reshape(x) => accumulate(grads, *x, Some(gout.to_vec())),
            Op::SliceChannels { x, start, channels } => {
                let c = *self.value(*x).shape().last().unwrap();
                let mut dx = vec![0.0; self.value(*x).len()];
                for (px, g) in dx.chunks_exact_mut(c).zip(gout.chunks_exact(*channels)) {
                    px[*start..*start + *channels].copy_from_slice(g);
                }
                accumulate(grads, *x, Some(dx));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = probs.len() / labels.len();
                let s = gout[0] / labels.len() as f32;
                let mut dz: Vec<f32> = probs.iter().map(|p| p * s).collect();
                for (r, &l) in labels.iter().enumerate() {
                    dz[r * k + l] -= s;
                }
                accumulate(grads, *logits, Some(dz));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f32>>], v: Var, delta: Option<Vec<f32>>) {
    let Some(delta) = delta else { return };
    match &mut grads[v.0] {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(&delta) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
