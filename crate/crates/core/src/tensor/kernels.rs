//! Raw buffer kernels behind the graph ops. Layout is `[B, H, W, C]`
//! row-major throughout; 3×3 kernels are `[3, 3, Cin, Cout]`.

/// `c = a · b + beta · c` with arbitrary element strides on `a` and `b`.
/// `c` is dense row-major `m × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    // SAFETY: the asserts above keep every index the kernel touches inside
    // the three slices; `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ImageDims {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageDims {
    pub fn pixels(&self) -> usize {
        self.batch * self.height * self.width
    }
}

/// Same-padded 3×3 patches: `[B·H·W, 9·C]`, column `(ky·3 + kx)·C + c`.
pub(crate) fn im2col3(x: &[f32], d: ImageDims) -> Vec<f32> {
    let c = d.channels;
    let row = 9 * c;
    let mut cols = vec![0.0f32; d.pixels() * row];
    for b in 0..d.batch {
        let img = &x[b * d.height * d.width * c..(b + 1) * d.height * d.width * c];
        for y in 0..d.height {
            for xx in 0..d.width {
                let out = &mut cols[((b * d.height + y) * d.width + xx) * row..][..row];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= d.height as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= d.width as isize {
                            continue;
                        }
                        let src = (sy as usize * d.width + sx as usize) * c;
                        let dst = (ky * 3 + kx) * c;
                        out[dst..dst + c].copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3`]: scatter-add patch gradients back to pixels.
pub(crate) fn col2im3(cols: &[f32], d: ImageDims, dx: &mut [f32]) {
    let c = d.channels;
    let row = 9 * c;
    for b in 0..d.batch {
        let img = &mut dx[b * d.height * d.width * c..(b + 1) * d.height * d.width * c];
        for y in 0..d.height {
            for xx in 0..d.width {
                let src = &cols[((b * d.height + y) * d.width + xx) * row..][..row];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= d.height as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= d.width as isize {
                            continue;
                        }
                        let dst = (sy as usize * d.width + sx as usize) * c;
                        let from = (ky * 3 + kx) * c;
                        for (o, v) in img[dst..dst + c].iter_mut().zip(&src[from..from + c]) {
                            *o += v;
                        }
                    }
                }
            }
        }
    }
}

/// Forward 3×3 convolution. Returns `(output, patches)`; the patches are
/// kept for the kernel gradient.
pub(crate) fn conv3_forward(
    x: &[f32],
    d: ImageDims,
    kernel: &[f32],
    bias: &[f32],
    cout: usize,
) -> (Vec<f32>, Vec<f32>) {
    let cols = im2col3(x, d);
    let m = d.pixels();
    let k = 9 * d.channels;
    let mut out = Vec::with_capacity(m * cout);
    for _ in 0..m {
        out.extend_from_slice(bias);
    }
    gemm(m, k, cout, &cols, (k, 1), kernel, (cout, 1), 1.0, &mut out);
    (out, cols)
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f32>>,
    pub kernel: Option<Vec<f32>>,
    pub bias: Option<Vec<f32>>,
}

pub(crate) fn conv3_backward(
    gout: &[f32],
    d: ImageDims,
    cols: &[f32],
    kernel: &[f32],
    cout: usize,
    want: (bool, bool, bool),
) -> ConvGrads {
    let m = d.pixels();
    let k = 9 * d.channels;
    let input = want.0.then(|| {
        let mut dcols = vec![0.0f32; m * k];
        // dcols[m,k] = gout[m,cout] · kernelᵀ[cout,k]
        gemm(m, cout, k, gout, (cout, 1), kernel, (1, cout), 0.0, &mut dcols);
        let mut dx = vec![0.0f32; m * d.channels];
        col2im3(&dcols, d, &mut dx);
        dx
    });
    let kernel_grad = want.1.then(|| {
        let mut dk = vec![0.0f32; k * cout];
        // dk[k,cout] = colsᵀ[k,m] · gout[m,cout]
        gemm(k, m, cout, cols, (1, k), gout, (cout, 1), 0.0, &mut dk);
        dk
    });
    let bias = want.2.then(|| {
        let mut db = vec![0.0f64; cout];
        for row in gout.chunks_exact(cout) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += f64::from(*v);
            }
        }
        db.into_iter().map(|v| v as f32).collect()
    });
    ConvGrads {
        input,
        kernel: kernel_grad,
        bias,
    }
}

/// 2×2 max pooling. Returns output and, per output element, the flat index
/// of the winning input element (first maximum wins ties).
pub(crate) fn maxpool2(x: &[f32], d: ImageDims) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow, c) = (d.height / 2, d.width / 2, d.channels);
    let n = d.batch * oh * ow * c;
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for b in 0..d.batch {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let at = |dy: usize, dx: usize| {
                        ((b * d.height + 2 * y + dy) * d.width + 2 * xx + dx) * c + ch
                    };
                    let mut best_i = at(0, 0);
                    let mut best = x[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = at(dy, dx);
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                    out.push(best);
                    arg.push(best_i as u32);
                }
            }
        }
    }
    (out, arg)
}

/// Nearest-neighbour 2× upsampling.
pub(crate) fn upsample2(x: &[f32], d: ImageDims) -> Vec<f32> {
    let (oh, ow, c) = (d.height * 2, d.width * 2, d.channels);
    let mut out = vec![0.0f32; d.batch * oh * ow * c];
    for b in 0..d.batch {
        for y in 0..oh {
            for xx in 0..ow {
                let src = ((b * d.height + y / 2) * d.width + xx / 2) * c;
                let dst = ((b * oh + y) * ow + xx) * c;
                out[dst..dst + c].copy_from_slice(&x[src..src + c]);
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(gout: &[f32], d: ImageDims) -> Vec<f32> {
    let (oh, ow, c) = (d.height * 2, d.width * 2, d.channels);
    let mut dx = vec![0.0f32; d.batch * d.height * d.width * c];
    for b in 0..d.batch {
        for y in 0..oh {
            for xx in 0..ow {
                let dst = ((b * d.height + y / 2) * d.width + xx / 2) * c;
                let src = ((b * oh + y) * ow + xx) * c;
                for (o, v) in dx[dst..dst + c].iter_mut().zip(&gout[src..src + c]) {
                    *o += v;
                }
            }
        }
    }
    dx
}

/// Mean absolute difference over `a.len()` elements, accumulated in f64.
pub(crate) fn mean_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| f64::from((x - y).abs()))
        .sum();
    (sum / a.len() as f64) as f32
}

pub(crate) fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
