use crate::error::{Error, Result};
use crate::imagegrid::ImageBuffer;

use super::ssim::{ssim, ssim_backward};
use super::{sign, LossValue};

/// Pixels whose whole (clipped) 3x3 window is valid; the SSIM term only uses these.
pub(crate) fn eroded_mask(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let mut ok = true;
            'win: for yy in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    if !mask[yy * width + xx] {
                        ok = false;
                        break 'win;
                    }
                }
            }
            out[y * width + x] = ok;
        }
    }
    out
}

/// `lambda_s * mean((1 - SSIM) / 2) + (1 - lambda_s) * mean|orig - synth|` over valid pixels.
///
/// The gradient is taken with respect to `synth`. The SSIM mean runs over
/// pixels whose full window is valid; it contributes nothing when that set is empty.
pub fn photometric_loss(
    orig: &ImageBuffer,
    synth: &ImageBuffer,
    mask: &[bool],
    lambda_s: f64,
) -> Result<LossValue<Vec<f64>>> {
    if !orig.same_shape(synth) {
        return Err(Error::dims(orig.shape_string(), synth.shape_string()));
    }
    if mask.len() != orig.pixel_count() {
        return Err(Error::dims(
            format!("{} mask entries", orig.pixel_count()),
            format!("{}", mask.len()),
        ));
    }
    let (w, h, c) = (orig.width(), orig.height(), orig.channels());
    let n_valid = mask.iter().filter(|&&b| b).count();
    if n_valid == 0 {
        return Err(Error::EmptyMask);
    }
    let (o, s) = (orig.data(), synth.data());
    let mut grad = vec![0.0; o.len()];

    let l1_scale = 1.0 / (n_valid * c) as f64;
    let mut l1 = 0.0;
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for ch in 0..c {
            let i = p * c + ch;
            let r = s[i] - o[i];
            l1 += r.abs();
            grad[i] = (1.0 - lambda_s) * l1_scale * sign(r);
        }
    }
    l1 *= l1_scale;

    let mut ssim_term = 0.0;
    if lambda_s != 0.0 {
        let inner = eroded_mask(mask, w, h);
        let n_inner = inner.iter().filter(|&&b| b).count();
        if n_inner > 0 {
            let map = ssim(orig, synth)?;
            let scale = 1.0 / (n_inner * c) as f64;
            let mut upstream = vec![0.0; o.len()];
            for (p, _) in inner.iter().enumerate().filter(|(_, &m)| m) {
                for ch in 0..c {
                    let i = p * c + ch;
                    ssim_term += (1.0 - map.values[i]) / 2.0;
                    upstream[i] = -0.5 * lambda_s * scale;
                }
            }
            ssim_term *= scale;
            for (g, d) in grad.iter_mut().zip(ssim_backward(orig, synth, &upstream)) {
                *g += d;
            }
        }
    }

    Ok(LossValue {
        value: lambda_s * ssim_term + (1.0 - lambda_s) * l1,
        grad,
    })
}
