//! Feature similarity index: phase congruency from a log-Gabor bank plus
//! Scharr gradient magnitude, pooled with phase-congruency weights.
//!
//! Pixel values are in `[0, 1]`. The constants of the customary 8-bit
//! formulation are rescaled so that `fsim(a, b)` equals the 8-bit index
//! of `255·a` and `255·b`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::ssim::image_dims;
use crate::error::Result;
use crate::tensor::Tensor;

pub const FSIM_T1: f64 = 0.85;
pub const FSIM_T2: f64 = 160.0 / (255.0 * 255.0);

const NSCALE: usize = 4;
const NORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const PC_EPSILON: f64 = 1e-4 / 255.0;

/// Row-major 2-D grid of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `Y = 0.299 R + 0.587 G + 0.114 B` of an `[H, W, 3]` image.
pub fn luminance(img: &Tensor) -> Grid {
    let (rows, cols) = (img.shape()[0], img.shape()[1]);
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();
    Grid { rows, cols, data }
}

/// Box-average by `f` ("same"-size, zero padded) and keep every `f`-th
/// pixel. `f = 1` is the identity.
fn downsample(g: &Grid, f: usize) -> Grid {
    if f == 1 {
        return g.clone();
    }
    let half = f / 2;
    let w = 1.0 / (f * f) as f64;
    let get = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= g.rows as isize || c >= g.cols as isize {
            0.0
        } else {
            g.at(r as usize, c as usize)
        }
    };
    let rows: Vec<usize> = (0..g.rows).step_by(f).collect();
    let cols: Vec<usize> = (0..g.cols).step_by(f).collect();
    let mut out = Grid::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let mut s = 0.0;
            for a in 0..f {
                for b in 0..f {
                    s += get((r + half) as isize - a as isize, (c + half) as isize - b as isize);
                }
            }
            out.data[i * out.cols + j] = s * w;
        }
    }
    out
}

/// Normalized frequency coordinates along one axis, centred.
fn axis_range(n: usize) -> Vec<f64> {
    if n % 2 == 1 {
        let d = (n as f64 - 1.0).max(1.0);
        (0..n).map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) / d).collect()
    } else {
        (0..n).map(|i| (i as f64 - (n / 2) as f64) / n as f64).collect()
    }
}

/// Undo a centring shift: element `floor(n/2)` moves to index 0.
fn ifftshift(g: &Grid) -> Grid {
    let (r, c) = (g.rows, g.cols);
    let mut out = Grid::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out.data[i * c + j] = g.at((i + r / 2) % r, (j + c / 2) % c);
        }
    }
    out
}

struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(rows: usize, cols: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: p.plan_fft_forward(cols),
            row_inv: p.plan_fft_inverse(cols),
            col_fwd: p.plan_fft_forward(rows),
            col_inv: p.plan_fft_inverse(rows),
        }
    }

    fn run(&self, data: &mut [Complex<f64>], inverse: bool) {
        let (rows, cols) = (self.rows, self.cols);
        let (rf, cf) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for row in data.chunks_exact_mut(cols) {
            rf.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                col[r] = data[r * cols + c];
            }
            cf.process(&mut col);
            for r in 0..rows {
                data[r * cols + c] = col[r];
            }
        }
        if inverse {
            let s = 1.0 / (rows * cols) as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency map (4 scales × 4 orientations), zero where the
/// summed filter amplitude is zero.
pub fn phase_congruency(im: &Grid) -> Grid {
    let (rows, cols) = (im.rows, im.cols);
    let n = rows * cols;
    let fft = Fft2::new(rows, cols);
    let mut spectrum: Vec<Complex<f64>> = im.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.run(&mut spectrum, false);

    let (xr, yr) = (axis_range(cols), axis_range(rows));
    let centred = |f: &dyn Fn(f64, f64) -> f64| Grid {
        rows,
        cols,
        data: (0..n).map(|i| f(xr[i % cols], yr[i / cols])).collect(),
    };
    let mut radius = ifftshift(&centred(&|x, y| (x * x + y * y).sqrt()));
    let theta = ifftshift(&centred(&|x, y| (-y).atan2(x)));
    radius.data[0] = 1.0;
    let lowpass = ifftshift(&centred(&|x, y| {
        let r = (x * x + y * y).sqrt();
        1.0 / (1.0 + (r / 0.45).powi(2 * 15))
    }));

    let log_gabor: Vec<Vec<f64>> = (0..NSCALE)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
            let mut lg: Vec<f64> = radius
                .data
                .iter()
                .zip(&lowpass.data)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            lg[0] = 0.0;
            lg
        })
        .collect();

    let theta_sigma = PI / NORIENT as f64 / D_THETA_ON_SIGMA;
    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    for o in 0..NORIENT {
        let angl = o as f64 * PI / NORIENT as f64;
        let (ca, sa) = (angl.cos(), angl.sin());
        let spread: Vec<f64> = theta
            .data
            .iter()
            .map(|&t| {
                let (st, ct) = (t.sin(), t.cos());
                let ds = st * ca - ct * sa;
                let dc = ct * ca + st * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut eo = Vec::with_capacity(NSCALE);
        let mut ifft_filters = Vec::with_capacity(NSCALE);
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            let mut f: Vec<Complex<f64>> = filter.iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft.run(&mut f, true);
            let scale = (n as f64).sqrt();
            ifft_filters.push(f.iter().map(|c| c.re * scale).collect::<Vec<f64>>());
            let mut resp: Vec<Complex<f64>> =
                spectrum.iter().zip(&filter).map(|(c, &h)| c * h).collect();
            fft.run(&mut resp, true);
            for i in 0..n {
                sum_an[i] += resp[i].norm();
                sum_e[i] += resp[i].re;
                sum_o[i] += resp[i].im;
            }
            if s == 0 {
                em_n = filter.iter().map(|v| v * v).sum();
            }
            eo.push(resp);
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let x = (sum_e[i].powi(2) + sum_o[i].powi(2)).sqrt() + PC_EPSILON;
            let (me, mo) = (sum_e[i] / x, sum_o[i] / x);
            for resp in &eo {
                let (e, od) = (resp[i].re, resp[i].im);
                energy[i] += e * me + od * mo - (e * mo - od * me).abs();
            }
        }

        let median_e2n = median(eo[0].iter().map(|c| c.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = mean_e2n / em_n;
        let mut sum_an2 = 0.0;
        for f in &ifft_filters {
            sum_an2 += f.iter().map(|v| v * v).sum::<f64>();
        }
        let mut sum_aiaj = 0.0;
        for si in 0..NSCALE - 1 {
            for sj in si + 1..NSCALE {
                sum_aiaj += ifft_filters[si]
                    .iter()
                    .zip(&ifft_filters[sj])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        let est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (est_noise_energy2 / 2.0).sqrt();
        let est_noise_energy = tau * (PI / 2.0).sqrt();
        let est_noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let t = (est_noise_energy + NOISE_K * est_noise_sigma) / 1.7;

        for i in 0..n {
            energy_all[i] += (energy[i] - t).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    Grid {
        rows,
        cols,
        data: energy_all
            .iter()
            .zip(&an_all)
            .map(|(&e, &a)| if a == 0.0 { 0.0 } else { e / a })
            .collect(),
    }
}

/// Scharr gradient magnitude, "same"-size with zero padding.
pub fn gradient_magnitude(g: &Grid) -> Grid {
    // correlation form of the 1/16-scaled Scharr pair; the sign flip of a
    // true convolution does not change the magnitude
    const DX: [[f64; 3]; 3] = [[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]];
    const DY: [[f64; 3]; 3] = [[3.0, 10.0, 3.0], [0.0, 0.0, 0.0], [-3.0, -10.0, -3.0]];
    let get = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= g.rows as isize || c >= g.cols as isize {
            0.0
        } else {
            g.at(r as usize, c as usize)
        }
    };
    let mut out = Grid::zeros(g.rows, g.cols);
    for r in 0..g.rows {
        for c in 0..g.cols {
            let (mut ix, mut iy) = (0.0, 0.0);
            for (a, (rx, ry)) in DX.iter().zip(&DY).enumerate() {
                for b in 0..3 {
                    let v = get(r as isize + a as isize - 1, c as isize + b as isize - 1);
                    ix += rx[b] / 16.0 * v;
                    iy += ry[b] / 16.0 * v;
                }
            }
            out.data[r * g.cols + c] = (ix * ix + iy * iy).sqrt();
        }
    }
    out
}

/// Downsampling factor applied before the feature maps.
pub fn fsim_downsample_factor(rows: usize, cols: usize) -> usize {
    ((rows.min(cols) as f64 / 256.0).round() as usize).max(1)
}

/// FSIM of two `[H, W, 3]` images (luminance only).
pub fn fsim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (h, w, c) = image_dims(a, b, "fsim")?;
    if c != 3 {
        return Err(crate::Error::Metric(format!("fsim expects 3 channels, got {c}")));
    }
    let f = fsim_downsample_factor(h, w);
    let y1 = downsample(&luminance(a), f);
    let y2 = downsample(&luminance(b), f);
    let (pc1, pc2) = (phase_congruency(&y1), phase_congruency(&y2));
    let (g1, g2) = (gradient_magnitude(&y1), gradient_magnitude(&y2));
    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for i in 0..pc1.data.len() {
        let (p, q) = (pc1.data[i], pc2.data[i]);
        let (u, v) = (g1.data[i], g2.data[i]);
        let s_pc = (2.0 * (p * q) + FSIM_T1) / (p * p + q * q + FSIM_T1);
        let s_g = (2.0 * (u * v) + FSIM_T2) / (u * u + v * v + FSIM_T2);
        let pcm = p.max(q);
        num += s_g * s_pc * pcm;
        den += pcm;
        plain += s_g * s_pc;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Ok(plain / pc1.data.len() as f64)
    }
}
