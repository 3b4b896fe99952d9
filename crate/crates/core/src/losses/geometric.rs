//! 3D registration between consecutive depth maps with projective data association.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform, TransformGradient};
use crate::imagegrid::{temporal_warp, DepthMap, Stencil};

use super::{sign, LossValue};

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGradient {
    pub depth_k: Vec<f64>,
    pub depth_k1: Vec<f64>,
    pub transform: TransformGradient,
}

/// Mean L1 over valid pixels and the three coordinates between `T * P_src` and
/// the point of `dst` found by reprojecting into `dst` and sampling its depth.
pub(crate) fn registration_term(
    src: &DepthMap,
    dst: &DepthMap,
    k: &Intrinsics,
    t: &RigidTransform,
    grad_src: &mut [f64],
    grad_dst: &mut [f64],
    grad_t: &mut TransformGradient,
) -> Result<f64> {
    let (w, h) = (src.width(), src.height());
    let warp = temporal_warp(k, src, t);
    let n_valid = warp.coords.valid_count();
    if n_valid == 0 {
        return Err(Error::EmptyMask);
    }
    let scale = 1.0 / (3 * n_valid) as f64;
    let mut total = 0.0;
    for i in (0..w * h).filter(|&i| warp.coords.valid[i]) {
        let (qu, qv) = (warp.coords.u[i], warp.coords.v[i]);
        let moved = warp.points[i];
        let st = Stencil::new(qu, qv, w, h);
        let (z_hat, dz_du, dz_dv) = st.eval(dst.data(), w, 1, 0);
        let ray = k.ray(qu, qv);
        let matched = ray * z_hat;
        let delta = moved - matched;
        total += delta.abs().sum();

        let sg = Vector3::new(sign(delta.x), sign(delta.y), sign(delta.z)) * scale;
        let d_zhat = -sg.dot(&ray);
        let d_qu = -sg.x * z_hat / k.fx + d_zhat * dz_du;
        let d_qv = -sg.y * z_hat / k.fy + d_zhat * dz_dv;
        let (ju, jv) = k.projection_jacobian(&moved);
        let d_moved = sg + ju * d_qu + jv * d_qv;

        for (j, wt) in st.taps(w) {
            grad_dst[j] += d_zhat * wt;
        }
        grad_src[i] += d_moved.dot(&(t.rotation * warp.rays[i]));
        grad_t.add_point(&warp.source_points[i], &d_moved);
    }
    Ok(total * scale)
}

/// Sum of the `k -> k+1` term under `T` and the `k+1 -> k` term under `T^-1`.
pub fn geometric_registration_loss(
    depth_k: &DepthMap,
    depth_k1: &DepthMap,
    k: &Intrinsics,
    t: &RigidTransform,
) -> Result<LossValue<GeometricGradient>> {
    if depth_k.width() != depth_k1.width() || depth_k.height() != depth_k1.height() {
        return Err(Error::dims(
            format!("{}x{}", depth_k.width(), depth_k.height()),
            format!("{}x{}", depth_k1.width(), depth_k1.height()),
        ));
    }
    let n = depth_k.len();
    let mut gk = vec![0.0; n];
    let mut gk1 = vec![0.0; n];
    let mut gt = TransformGradient::zero();
    let forward = registration_term(depth_k, depth_k1, k, t, &mut gk, &mut gk1, &mut gt)?;
    let inv = t.inverse();
    let mut gt_inv = TransformGradient::zero();
    let backward = registration_term(depth_k1, depth_k, k, &inv, &mut gk1, &mut gk, &mut gt_inv)?;
    gt += gt_inv.through_inverse(t);
    Ok(LossValue {
        value: forward + backward,
        grad: GeometricGradient {
            depth_k: gk,
            depth_k1: gk1,
            transform: gt,
        },
    })
}
