use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Param, Tensor, Var};

/// 3×3 same-padded conv: kernel `[3,3,Cin,Cout]` plus bias `[Cout]`.
#[derive(Clone, Debug)]
pub(crate) struct Conv3 {
    pub kernel: Param,
    pub bias: Param,
}

impl Conv3 {
    pub fn he(name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            kernel: Param::new(format!("{name}.w"), he_normal(&[3, 3, cin, cout], 9 * cin, rng)),
            bias: Param::new(format!("{name}.b"), Tensor::zeros(&[cout])),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[3]
    }
}

/// Fully connected layer: weight `[N, M]`, bias `[M]`.
#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn he(name: &str, n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::new(format!("{name}.w"), he_normal(&[n_in, n_out], n_in, rng)),
            bias: Param::new(format!("{name}.b"), Tensor::zeros(&[n_out])),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}

/// Bound leaves for a `(weight, bias)` pair.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundPair {
    pub w: Var,
    pub b: Var,
}

pub(crate) fn bind_pair(g: &mut Graph, w: &Param, b: &Param) -> BoundPair {
    BoundPair {
        w: g.param(w),
        b: g.param(b),
    }
}

/// Attach the layer name to numeric failures.
pub(crate) fn in_layer<T>(r: Result<T>, layer: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { .. } => Error::NonFiniteLayer {
            layer: layer.to_string(),
        },
        other => other,
    })
}

/// 64-bit FNV-1a.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// FNV-1a over the little-endian bytes of every parameter, in order.
pub fn param_checksum<'a>(params: impl IntoIterator<Item = &'a Param>) -> u64 {
    let mut h = Fnv1a::new();
    for p in params {
        for v in p.value().data() {
            h.update(&v.to_le_bytes());
        }
    }
    h.finish()
}
