use crate::error::{Error, Result};
use crate::imagegrid::{stereo_map_raw, DisparityMap, StereoDirection, Stencil};

use super::{sign, LossValue};

#[derive(Debug, Clone, PartialEq)]
pub struct DisparityGradient {
    /// `dL/d` left pixel disparity.
    pub left: Vec<f64>,
    /// `dL/d` right pixel disparity.
    pub right: Vec<f64>,
}

/// Value of each directional term; their sum is the loss value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityTerms {
    pub left: f64,
    pub right: f64,
}

/// One directional term: `mean|target/W - warp(source/W)|`, warping with `target`.
fn directional(
    target: &DisparityMap,
    source: &DisparityMap,
    direction: StereoDirection,
    grad_target: &mut [f64],
    grad_source: &mut [f64],
) -> Result<f64> {
    let (w, h) = (target.width(), target.height());
    let inv_w = 1.0 / w as f64;
    let coords = stereo_map_raw(w, h, target.data(), direction);
    let n_valid = coords.valid_count();
    if n_valid == 0 {
        return Err(Error::EmptyMask);
    }
    let scale = 1.0 / n_valid as f64;
    let shift = direction.shift_sign();
    let (t, s) = (target.data(), source.data());
    let mut total = 0.0;
    for i in (0..w * h).filter(|&i| coords.valid[i]) {
        let st = Stencil::new(coords.u[i], coords.v[i], w, h);
        let (sampled, du, _) = st.eval(s, w, 1, 0);
        let r = (t[i] - sampled) * inv_w;
        total += r.abs();
        let g = sign(r) * scale;
        // sampling column is u + shift * target[i]
        grad_target[i] += g * inv_w * (1.0 - shift * du);
        for (j, wt) in st.taps(w) {
            grad_source[j] -= g * inv_w * wt;
        }
    }
    Ok(total * scale)
}

/// Left-right consistency of width-normalized disparity maps.
///
/// Each map is compared with the other map warped into its view using its own
/// disparities; the value is the sum of the two directional L1 means.
pub fn disparity_consistency_loss(
    d_left: &DisparityMap,
    d_right: &DisparityMap,
) -> Result<LossValue<DisparityGradient>> {
    disparity_consistency_terms(d_left, d_right).map(|(v, _)| v)
}

pub fn disparity_consistency_terms(
    d_left: &DisparityMap,
    d_right: &DisparityMap,
) -> Result<(LossValue<DisparityGradient>, DisparityTerms)> {
    if d_left.width() != d_right.width() || d_left.height() != d_right.height() {
        return Err(Error::dims(
            format!("{}x{}", d_left.width(), d_left.height()),
            format!("{}x{}", d_right.width(), d_right.height()),
        ));
    }
    let n = d_left.len();
    let mut gl = vec![0.0; n];
    let mut gr = vec![0.0; n];
    let left = directional(d_left, d_right, StereoDirection::LeftFromRight, &mut gl, &mut gr)?;
    let right = directional(d_right, d_left, StereoDirection::RightFromLeft, &mut gr, &mut gl)?;
    Ok((
        LossValue {
            value: left + right,
            grad: DisparityGradient {
                left: gl,
                right: gr,
            },
        },
        DisparityTerms { left, right },
    ))
}
