//! SSIM over 3x3 mean-filter windows, clipped at the image border.

use crate::error::{Error, Result};
use crate::imagegrid::ImageBuffer;

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Per-pixel, per-channel SSIM values laid out like the input images.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl SsimMap {
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }
}

#[derive(Debug, Clone, Copy)]
struct WindowStats {
    n: f64,
    mu_a: f64,
    mu_b: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
}

impl WindowStats {
    fn ssim(&self) -> f64 {
        let (n1, n2, d1, d2) = self.terms();
        n1 * n2 / (d1 * d2)
    }

    fn terms(&self) -> (f64, f64, f64, f64) {
        let var_a = self.saa - self.mu_a * self.mu_a;
        let var_b = self.sbb - self.mu_b * self.mu_b;
        let cov = self.sab - self.mu_a * self.mu_b;
        (
            2.0 * self.mu_a * self.mu_b + C1,
            2.0 * cov + C2,
            self.mu_a * self.mu_a + self.mu_b * self.mu_b + C1,
            var_a + var_b + C2,
        )
    }

    /// `dS/dmu_b`, `dS/dE[b^2]`, `dS/dE[ab]` treating the three window sums as independent.
    fn partials(&self) -> (f64, f64, f64) {
        let (n1, n2, d1, d2) = self.terms();
        let den = d1 * d2;
        let s = n1 * n2 / den;
        let (ma, mb) = (self.mu_a, self.mu_b);
        // d/dmu_b: dN1 = 2 mu_a, dN2 = -2 mu_a, dD1 = 2 mu_b, dD2 = -2 mu_b
        let d_mu = ((2.0 * ma * n2 - 2.0 * ma * n1) - s * (2.0 * mb * d2 - 2.0 * mb * d1)) / den;
        // d/dE[b^2]: dD2 = 1
        let d_sbb = -s * d1 / den;
        // d/dE[ab]: dN2 = 2
        let d_sab = 2.0 * n1 / den;
        (d_mu, d_sbb, d_sab)
    }
}

fn window(x: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    x.saturating_sub(1)..=(x + 1).min(n - 1)
}

fn stats(a: &ImageBuffer, b: &ImageBuffer, x: usize, y: usize, c: usize) -> WindowStats {
    let (w, h) = (a.width(), a.height());
    let mut acc = WindowStats {
        n: 0.0,
        mu_a: 0.0,
        mu_b: 0.0,
        saa: 0.0,
        sbb: 0.0,
        sab: 0.0,
    };
    for yy in window(y, h) {
        for xx in window(x, w) {
            let (va, vb) = (a.get(xx, yy, c), b.get(xx, yy, c));
            acc.n += 1.0;
            acc.mu_a += va;
            acc.mu_b += vb;
            acc.saa += va * va;
            acc.sbb += vb * vb;
            acc.sab += va * vb;
        }
    }
    let inv = 1.0 / acc.n;
    acc.mu_a *= inv;
    acc.mu_b *= inv;
    acc.saa *= inv;
    acc.sbb *= inv;
    acc.sab *= inv;
    acc
}

fn check(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::dims(a.shape_string(), b.shape_string()));
    }
    Ok(())
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<SsimMap> {
    check(a, b)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let mut values = Vec::with_capacity(w * h * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                values.push(stats(a, b, x, y, ch).ssim());
            }
        }
    }
    Ok(SsimMap {
        width: w,
        height: h,
        channels: c,
        values,
    })
}

/// Backpropagates `dL/dSSIM` (one weight per pixel and channel) to `dL/db`.
pub(crate) fn ssim_backward(a: &ImageBuffer, b: &ImageBuffer, upstream: &[f64]) -> Vec<f64> {
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let n = w * h * c;
    // Per-window coefficients of dL/db_q = alpha + 2 beta b_q + gamma a_q.
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let i = (y * w + x) * c + ch;
                let g = upstream[i];
                if g == 0.0 {
                    continue;
                }
                let st = stats(a, b, x, y, ch);
                let (d_mu, d_sbb, d_sab) = st.partials();
                let k = g / st.n;
                alpha[i] = k * d_mu;
                beta[i] = k * d_sbb;
                gamma[i] = k * d_sab;
            }
        }
    }
    let mut grad = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let (mut sa, mut sb, mut sg) = (0.0, 0.0, 0.0);
                for yy in window(y, h) {
                    for xx in window(x, w) {
                        let j = (yy * w + xx) * c + ch;
                        sa += alpha[j];
                        sb += beta[j];
                        sg += gamma[j];
                    }
                }
                let i = (y * w + x) * c + ch;
                grad[i] = sa + 2.0 * sb * b.data()[i] + sg * a.data()[i];
            }
        }
    }
    grad
}
