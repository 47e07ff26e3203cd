#!/usr/bin/env python3
"""Reference SSIM and FSIM over the fixed pair corpus.

Writes the corpus (pairs of binary PPMs) with --write, then prints one
line per pair: name, SSIM, FSIM. FSIM is evaluated in the 8-bit domain
with the customary constants, directly on the PPM byte values.
"""

import argparse
import pathlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DATA = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/data/metric_pairs"


def write_ppm(path, img):
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(img.astype(np.uint8).tobytes())


def read_ppm(path):
    raw = path.read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(raw[pos:pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def to_bytes(x):
    return np.clip(np.round(x * 255.0), 0, 255)


def disc(h, w, cy, cx, r, rgb, bg):
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.empty((h, w, 3))
    img[:] = bg
    img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = rgb
    return img


def box_blur(img):
    pad = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = sum(pad[dy:dy + img.shape[0], dx:dx + img.shape[1]] for dy in range(3) for dx in range(3))
    return acc / 9.0


def build_corpus():
    rng = np.random.default_rng(20240611)
    pairs = []
    x = rng.random((32, 32, 3))
    pairs.append(("noise_sigma01", x, x + rng.normal(0, 0.1, x.shape)))
    y = rng.random((32, 32, 3))
    pairs.append(("independent_uniform", x, y))
    a = disc(32, 32, 15.5, 16.0, 8, [0.9, 0.15, 0.1], 0.5)
    pairs.append(("disc_vs_shifted", a, disc(32, 32, 17.0, 14.5, 8, [0.9, 0.15, 0.1], 0.5)))
    pairs.append(("disc_vs_blur", a, box_blur(a)))
    gy, gx = np.mgrid[0:32, 0:32] / 31.0
    ramp = np.stack([gx, gy, 0.5 * (gx + gy)], axis=-1)
    pairs.append(("ramp_vs_flipped", ramp, ramp[:, ::-1]))
    stripes = np.repeat((np.sin(gx * 6 * np.pi) * 0.4 + 0.5)[..., None], 3, axis=-1)
    pairs.append(("stripes_vs_contrast", stripes, 0.5 + 0.5 * (stripes - 0.5)))
    odd = rng.random((27, 35, 3))
    pairs.append(("odd_size_noise", odd, odd + rng.normal(0, 0.05, odd.shape)))
    tall = disc(40, 24, 20, 12, 7, [0.1, 0.25, 0.9], 0.3)
    pairs.append(("tall_disc_vs_darker", tall, tall * 0.8))
    flat = np.full((32, 32, 3), 0.4)
    pairs.append(("flat_vs_disc", flat, disc(32, 32, 16, 16, 6, [0.9, 0.8, 0.1], 0.4)))
    pairs.append(("flat_vs_flat", flat, np.full((32, 32, 3), 0.45)))
    return [(n, to_bytes(p), to_bytes(q)) for n, p, q in pairs]


# --- SSIM: 8x8 uniform windows, unbiased variances, L = 1 -----------------

def ssim(a, b):
    a = a.astype(np.float64) / 255.0
    b = b.astype(np.float64) / 255.0
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for ch in range(a.shape[2]):
        wa = sliding_window_view(a[:, :, ch], (8, 8)).reshape(-1, 64)
        wb = sliding_window_view(b[:, :, ch], (8, 8)).reshape(-1, 64)
        ma, mb = wa.mean(1), wb.mean(1)
        va = wa.var(1, ddof=1)
        vb = wb.var(1, ddof=1)
        cov = ((wa - ma[:, None]) * (wb - mb[:, None])).sum(1) / 63.0
        s = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2))
        vals.append(s.mean())
    return float(np.mean(vals))


# --- FSIM (luminance), 8-bit domain ----------------------------------------

def centred_grid(rows, cols):
    def rng_(n):
        if n % 2:
            return np.arange(-(n - 1) / 2, (n - 1) / 2 + 1) / max(n - 1, 1)
        return np.arange(-n / 2, n / 2) / n
    return np.meshgrid(rng_(cols), rng_(rows))


def phasecong(im):
    nscale, norient = 4, 4
    min_wl, mult, sigma_onf, d_theta_on_sigma, k, eps = 6, 2, 0.55, 1.2, 2.0, 1e-4
    theta_sigma = np.pi / norient / d_theta_on_sigma
    rows, cols = im.shape
    imfft = np.fft.fft2(im)
    x, y = centred_grid(rows, cols)
    radius = np.fft.ifftshift(np.sqrt(x ** 2 + y ** 2))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    radius[0, 0] = 1.0
    sint, cost = np.sin(theta), np.cos(theta)
    lp = np.fft.ifftshift(1.0 / (1.0 + (np.sqrt(x ** 2 + y ** 2) / 0.45) ** 30))
    log_gabor = []
    for s in range(nscale):
        fo = 1.0 / (min_wl * mult ** s)
        g = np.exp(-(np.log(radius / fo)) ** 2 / (2 * np.log(sigma_onf) ** 2)) * lp
        g[0, 0] = 0
        log_gabor.append(g)
    energy_all = np.zeros((rows, cols))
    an_all = np.zeros((rows, cols))
    for o in range(norient):
        ang = o * np.pi / norient
        ds = sint * np.cos(ang) - cost * np.sin(ang)
        dc = cost * np.cos(ang) + sint * np.sin(ang)
        spread = np.exp(-np.abs(np.arctan2(ds, dc)) ** 2 / (2 * theta_sigma ** 2))
        eo, ifilt = [], []
        sum_e = np.zeros((rows, cols))
        sum_o = np.zeros((rows, cols))
        sum_an = np.zeros((rows, cols))
        for s in range(nscale):
            filt = log_gabor[s] * spread
            ifilt.append(np.real(np.fft.ifft2(filt)) * np.sqrt(rows * cols))
            r = np.fft.ifft2(imfft * filt)
            eo.append(r)
            sum_an += np.abs(r)
            sum_e += r.real
            sum_o += r.imag
            if s == 0:
                em_n = np.sum(filt ** 2)
        xe = np.sqrt(sum_e ** 2 + sum_o ** 2) + eps
        me, mo = sum_e / xe, sum_o / xe
        energy = np.zeros((rows, cols))
        for r in eo:
            e, od = r.real, r.imag
            energy += e * me + od * mo - np.abs(e * mo - od * me)
        mean_e2n = -np.median(np.abs(eo[0]) ** 2) / np.log(0.5)
        noise_power = mean_e2n / em_n
        sum_an2 = sum(np.sum(f ** 2) for f in ifilt)
        sum_aiaj = sum(np.sum(ifilt[i] * ifilt[j]) for i in range(nscale) for j in range(i + 1, nscale))
        est2 = 2 * noise_power * sum_an2 + 4 * noise_power * sum_aiaj
        tau = np.sqrt(est2 / 2)
        t = (tau * np.sqrt(np.pi / 2) + k * np.sqrt((2 - np.pi / 2) * tau ** 2)) / 1.7
        energy_all += np.maximum(energy - t, 0)
        an_all += sum_an
    with np.errstate(invalid="ignore", divide="ignore"):
        pc = np.where(an_all == 0, 0.0, energy_all / an_all)
    return pc


def conv2_same(img, kern):
    kh, kw = kern.shape
    full = np.zeros((img.shape[0] + kh - 1, img.shape[1] + kw - 1))
    for i in range(kh):
        for j in range(kw):
            full[i:i + img.shape[0], j:j + img.shape[1]] += kern[i, j] * img
    r0, c0 = kh // 2, kw // 2
    return full[r0:r0 + img.shape[0], c0:c0 + img.shape[1]]


def fsim(a, b):
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    y1 = 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
    y2 = 0.299 * b[..., 0] + 0.587 * b[..., 1] + 0.114 * b[..., 2]
    f = max(1, int(round(min(y1.shape) / 256)))
    if f > 1:
        kern = np.full((f, f), 1.0 / (f * f))
        y1 = conv2_same(y1, kern)[::f, ::f]
        y2 = conv2_same(y2, kern)[::f, ::f]
    pc1, pc2 = phasecong(y1), phasecong(y2)
    dx = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]]) / 16.0
    dy = np.array([[3, 10, 3], [0, 0, 0], [-3, -10, -3]]) / 16.0
    g1 = np.hypot(conv2_same(y1, dx), conv2_same(y1, dy))
    g2 = np.hypot(conv2_same(y2, dx), conv2_same(y2, dy))
    t1, t2 = 0.85, 160.0
    s_pc = (2 * pc1 * pc2 + t1) / (pc1 ** 2 + pc2 ** 2 + t1)
    s_g = (2 * g1 * g2 + t2) / (g1 ** 2 + g2 ** 2 + t2)
    pcm = np.maximum(pc1, pc2)
    if pcm.sum() == 0:
        return float(np.mean(s_g * s_pc))
    return float(np.sum(s_g * s_pc * pcm) / np.sum(pcm))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--write", action="store_true", help="regenerate the corpus files")
    args = ap.parse_args()
    if args.write:
        DATA.mkdir(parents=True, exist_ok=True)
        for name, p, q in build_corpus():
            write_ppm(DATA / f"{name}_a.ppm", p)
            write_ppm(DATA / f"{name}_b.ppm", q)
    names = sorted({p.name[:-6] for p in DATA.glob("*_a.ppm")})
    for name in names:
        a = read_ppm(DATA / f"{name}_a.ppm")
        b = read_ppm(DATA / f"{name}_b.ppm")
        print(f'("{name}", {ssim(a, b):.12e}, {fsim(a, b):.12e}),')


if __name__ == "__main__":
    main()
