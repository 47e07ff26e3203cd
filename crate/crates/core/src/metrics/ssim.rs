use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side of the square uniform window.
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

pub(crate) fn image_dims(a: &Tensor, b: &Tensor, metric: &str) -> Result<(usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::Metric(format!(
            "{metric}: shapes differ, {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    match *a.shape() {
        [h, w, c] if c > 0 => Ok((h, w, c)),
        ref s => Err(Error::Metric(format!("{metric} expects [H, W, C], got {s:?}"))),
    }
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y, x);
                data[(y + 1) * (w + 1) + x + 1] = data[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w: w + 1, data }
    }

    fn window(&self, y: usize, x: usize, n: usize) -> f64 {
        let at = |yy: usize, xx: usize| self.data[yy * self.w + xx];
        at(y + n, x + n) - at(y, x + n) - at(y + n, x) + at(y, x)
    }
}

/// Mean SSIM over every 8×8 window (stride 1) and every channel, with
/// uniform window weights, unbiased (N−1) variances, and dynamic range 1.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (h, w, c) = image_dims(a, b, "ssim")?;
    let n = SSIM_WINDOW;
    if h < n || w < n {
        return Err(Error::Metric(format!("ssim needs at least {n}×{n} pixels")));
    }
    let (da, db) = (a.data(), b.data());
    let np = (n * n) as f64;
    let mut total = 0.0;
    for ch in 0..c {
        let px = |d: &[f32], y: usize, x: usize| f64::from(d[(y * w + x) * c + ch]);
        let sa = Integral::new(h, w, |y, x| px(da, y, x));
        let sb = Integral::new(h, w, |y, x| px(db, y, x));
        let saa = Integral::new(h, w, |y, x| px(da, y, x).powi(2));
        let sbb = Integral::new(h, w, |y, x| px(db, y, x).powi(2));
        let sab = Integral::new(h, w, |y, x| px(da, y, x) * px(db, y, x));
        let mut acc = 0.0;
        for y in 0..=h - n {
            for x in 0..=w - n {
                let (ta, tb) = (sa.window(y, x, n), sb.window(y, x, n));
                let (ma, mb) = (ta / np, tb / np);
                let va = (saa.window(y, x, n) - ta * ta / np) / (np - 1.0);
                let vb = (sbb.window(y, x, n) - tb * tb / np) / (np - 1.0);
                let cov = (sab.window(y, x, n) - (ta * tb) / np) / (np - 1.0);
                acc += ((2.0 * (ma * mb) + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
        total += acc / ((h - n + 1) * (w - n + 1)) as f64;
    }
    Ok(total / c as f64)
}
