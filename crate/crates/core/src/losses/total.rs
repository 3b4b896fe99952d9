//! Aggregation of all loss families over stereo frames and consecutive pairs.

use crate::error::{Error, Result};
use crate::geometry::{
    conjugate_by_offset, Intrinsics, Pose6DoF, RigidTransform, StereoRig, TransformGradient,
};
use crate::imagegrid::{stereo_map_raw, synthesize, temporal_warp, DepthMap, ImageBuffer, StereoDirection};

use super::disparity::disparity_consistency_terms;
use super::geometric::geometric_registration_loss;
use super::photometric::photometric_loss;
use super::pose::{pose_consistency_loss, PoseGradient};
use super::{LossValue, LossWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub left: ImageBuffer,
    pub right: ImageBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoDepths {
    pub left: DepthMap,
    pub right: DepthMap,
}

/// Relative motion `T_{k,k+1}` predicted from the left and from the right sequence.
///
/// Both are expressed in the left-camera frame, so at the true motion they coincide.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PosePair {
    pub left: Pose6DoF,
    pub right: Pose6DoF,
}

impl PosePair {
    pub fn both(pose: Pose6DoF) -> Self {
        Self {
            left: pose,
            right: pose,
        }
    }
}

/// Unweighted value of each loss family. Families with zero aggregation
/// weight are not evaluated and report zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub spatial_photo: f64,
    pub disparity: f64,
    pub pose: f64,
    pub temporal_photo: f64,
    pub geometric: f64,
}

impl LossBreakdown {
    pub const NAMES: [&'static str; 5] = [
        "spatial_photo",
        "disparity",
        "pose",
        "temporal_photo",
        "geometric",
    ];

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.spatial_photo,
            self.disparity,
            self.pose,
            self.temporal_photo,
            self.geometric,
        ]
    }

    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.as_array()
            .iter()
            .zip(w.family_weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    fn accumulate(&mut self, other: &LossBreakdown) {
        self.spatial_photo += other.spatial_photo;
        self.disparity += other.disparity;
        self.pose += other.pose;
        self.temporal_photo += other.temporal_photo;
        self.geometric += other.geometric;
    }
}

/// `dL/d depth` (meters) for a frame's two depth maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGradient {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl DepthGradient {
    fn zeros(n: usize) -> Self {
        Self {
            left: vec![0.0; n],
            right: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGradient {
    /// One entry per frame.
    pub depths: Vec<DepthGradient>,
    /// One entry per consecutive pair, with respect to `[tx, ty, tz, roll, pitch, yaw]`.
    pub poses: Vec<PoseGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLoss {
    /// Weighted total.
    pub value: f64,
    pub breakdown: LossBreakdown,
    pub grad: SequenceGradient,
}

fn check_same(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::dims(a.shape_string(), b.shape_string()));
    }
    Ok(())
}

fn check_depth(img: &ImageBuffer, d: &DepthMap) -> Result<()> {
    if img.width() != d.width() || img.height() != d.height() {
        return Err(Error::dims(
            format!("{}x{}", img.width(), img.height()),
            format!("{}x{}", d.width(), d.height()),
        ));
    }
    Ok(())
}

/// Photometric loss of `target` against `source` warped by the stereo shift
/// derived from `depth_target`; the gradient is with respect to that depth.
pub fn stereo_photometric(
    target: &ImageBuffer,
    source: &ImageBuffer,
    depth_target: &DepthMap,
    rig: &StereoRig,
    direction: StereoDirection,
    lambda_s: f64,
) -> Result<LossValue<Vec<f64>>> {
    check_same(target, source)?;
    check_depth(target, depth_target)?;
    let bf = rig.disparity_constant();
    let disparity: Vec<f64> = depth_target.data().iter().map(|z| bf / z).collect();
    let coords = stereo_map_raw(target.width(), target.height(), &disparity, direction);
    let synth = synthesize(source, &coords)?;
    let photo = photometric_loss(target, &synth.image, &synth.mask, lambda_s)?;
    let c = target.channels();
    let shift = direction.shift_sign();
    let grad = depth_target
        .data()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            if !synth.mask[i] {
                return 0.0;
            }
            let d_u: f64 = (0..c)
                .map(|ch| photo.grad[i * c + ch] * synth.jacobian.du[i * c + ch])
                .sum();
            // u_s = u + shift * B f / z
            d_u * shift * (-bf / (z * z))
        })
        .collect();
    Ok(LossValue {
        value: photo.value,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGradient {
    pub depth: Vec<f64>,
    pub transform: TransformGradient,
}

/// Photometric loss of `target` against `source` warped through depth and motion `t`
/// (`t` maps target-frame points into the source frame).
pub fn temporal_photometric(
    target: &ImageBuffer,
    source: &ImageBuffer,
    depth_target: &DepthMap,
    k: &Intrinsics,
    t: &RigidTransform,
    lambda_s: f64,
) -> Result<LossValue<TemporalGradient>> {
    check_same(target, source)?;
    check_depth(target, depth_target)?;
    let warp = temporal_warp(k, depth_target, t);
    let synth = synthesize(source, &warp.coords)?;
    let photo = photometric_loss(target, &synth.image, &synth.mask, lambda_s)?;
    let c = target.channels();
    let mut depth = vec![0.0; depth_target.len()];
    let mut transform = TransformGradient::zero();
    for i in (0..depth.len()).filter(|&i| synth.mask[i]) {
        let (mut d_u, mut d_v) = (0.0, 0.0);
        for ch in 0..c {
            let g = photo.grad[i * c + ch];
            d_u += g * synth.jacobian.du[i * c + ch];
            d_v += g * synth.jacobian.dv[i * c + ch];
        }
        let (ju, jv) = k.projection_jacobian(&warp.points[i]);
        let d_point = ju * d_u + jv * d_v;
        depth[i] = d_point.dot(&(t.rotation * warp.rays[i]));
        transform.add_point(&warp.source_points[i], &d_point);
    }
    Ok(LossValue {
        value: photo.value,
        grad: TemporalGradient { depth, transform },
    })
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Stereo losses of one frame: both photometric directions and disparity consistency.
/// The gradient is weighted by the aggregation weights.
pub fn spatial_loss(
    frame: &StereoFrame,
    depths: &StereoDepths,
    rig: &StereoRig,
    weights: &LossWeights,
) -> Result<(LossBreakdown, DepthGradient)> {
    let n = depths.left.len();
    let mut out = LossBreakdown::default();
    let mut grad = DepthGradient::zeros(n);
    if weights.w_spatial_photo != 0.0 {
        let l = stereo_photometric(
            &frame.left,
            &frame.right,
            &depths.left,
            rig,
            StereoDirection::LeftFromRight,
            weights.lambda_s,
        )?;
        let r = stereo_photometric(
            &frame.right,
            &frame.left,
            &depths.right,
            rig,
            StereoDirection::RightFromLeft,
            weights.lambda_s,
        )?;
        out.spatial_photo = l.value + r.value;
        axpy(&mut grad.left, weights.w_spatial_photo, &l.grad);
        axpy(&mut grad.right, weights.w_spatial_photo, &r.grad);
    }
    if weights.w_disp != 0.0 {
        let dl = depths.left.to_disparity(rig);
        let dr = depths.right.to_disparity(rig);
        let (l, _) = disparity_consistency_terms(&dl, &dr)?;
        out.disparity = l.value;
        let bf = rig.disparity_constant();
        for (i, z) in depths.left.data().iter().enumerate() {
            grad.left[i] += weights.w_disp * l.grad.left[i] * (-bf / (z * z));
        }
        for (i, z) in depths.right.data().iter().enumerate() {
            grad.right[i] += weights.w_disp * l.grad.right[i] * (-bf / (z * z));
        }
    }
    Ok((out, grad))
}

/// Temporal losses of one monocular sequence between frames `k` and `k+1` under motion `t`.
/// Returns the breakdown and weighted gradients for `(depth_k, depth_k1, t)`.
pub fn temporal_loss(
    image_k: &ImageBuffer,
    image_k1: &ImageBuffer,
    depth_k: &DepthMap,
    depth_k1: Option<&DepthMap>,
    k: &Intrinsics,
    t: &RigidTransform,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>, Vec<f64>, TransformGradient)> {
    let n = depth_k.len();
    let mut out = LossBreakdown::default();
    let mut gk = vec![0.0; n];
    let mut gk1 = vec![0.0; n];
    let mut gt = TransformGradient::zero();
    let inv = t.inverse();
    if weights.w_temporal_photo != 0.0 {
        let w = weights.w_temporal_photo;
        let fwd = temporal_photometric(image_k, image_k1, depth_k, k, t, weights.lambda_s)?;
        out.temporal_photo += fwd.value;
        axpy(&mut gk, w, &fwd.grad.depth);
        gt.rotation += fwd.grad.transform.rotation * w;
        gt.translation += fwd.grad.transform.translation * w;
        if let Some(depth_k1) = depth_k1 {
            let bwd = temporal_photometric(image_k1, image_k, depth_k1, k, &inv, weights.lambda_s)?;
            out.temporal_photo += bwd.value;
            axpy(&mut gk1, w, &bwd.grad.depth);
            let through = bwd.grad.transform.through_inverse(t);
            gt.rotation += through.rotation * w;
            gt.translation += through.translation * w;
        }
    }
    if weights.w_geo != 0.0 {
        if let Some(depth_k1) = depth_k1 {
            let w = weights.w_geo;
            let g = geometric_registration_loss(depth_k, depth_k1, k, t)?;
            out.geometric = g.value;
            axpy(&mut gk, w, &g.grad.depth_k);
            axpy(&mut gk1, w, &g.grad.depth_k1);
            gt.rotation += g.grad.transform.rotation * w;
            gt.translation += g.grad.transform.translation * w;
        }
    }
    Ok((out, gk, gk1, gt))
}

/// Full objective over a stereo sequence: spatial losses on every frame,
/// temporal losses on both monocular sequences and pose consistency for every
/// consecutive pair.
pub fn sequence_loss(
    frames: &[StereoFrame],
    depths: &[StereoDepths],
    poses: &[PosePair],
    rig: &StereoRig,
    weights: &LossWeights,
) -> Result<SequenceLoss> {
    if frames.is_empty() || depths.len() != frames.len() || poses.len() + 1 != frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames need as many depth pairs and one pose pair fewer (got {} and {})",
            frames.len(),
            depths.len(),
            poses.len()
        )));
    }
    for (f, d) in frames.iter().zip(depths) {
        check_same(&f.left, &f.right)?;
        check_depth(&f.left, &d.left)?;
        check_depth(&f.left, &d.right)?;
        check_same(&frames[0].left, &f.left)?;
    }
    let k = &rig.intrinsics;
    let offset = rig.right_camera_offset();
    let n = depths[0].left.len();

    let mut breakdown = LossBreakdown::default();
    let mut depth_grads = Vec::with_capacity(frames.len());
    for (frame, d) in frames.iter().zip(depths) {
        let (b, g) = spatial_loss(frame, d, rig, weights)?;
        breakdown.accumulate(&b);
        depth_grads.push(g);
    }
    let mut pose_grads = Vec::with_capacity(poses.len());
    for (idx, pair) in poses.iter().enumerate() {
        let mut pg = PoseGradient {
            left: [0.0; 6],
            right: [0.0; 6],
        };
        if weights.w_pose != 0.0 {
            let l = pose_consistency_loss(&pair.left, &pair.right, weights.lambda_p, weights.lambda_o);
            breakdown.pose += l.value;
            for j in 0..6 {
                pg.left[j] += weights.w_pose * l.grad.left[j];
                pg.right[j] += weights.w_pose * l.grad.right[j];
            }
        }
        if weights.w_temporal_photo != 0.0 || weights.w_geo != 0.0 {
            let (fa, fb) = (&frames[idx], &frames[idx + 1]);
            let (da, db) = (&depths[idx], &depths[idx + 1]);

            let t_left = pair.left.to_transform();
            let (b, gk, gk1, gt) =
                temporal_loss(&fa.left, &fb.left, &da.left, Some(&db.left), k, &t_left, weights)?;
            breakdown.accumulate(&b);
            axpy(&mut depth_grads[idx].left, 1.0, &gk);
            axpy(&mut depth_grads[idx + 1].left, 1.0, &gk1);
            for (j, v) in gt.to_pose(&pair.left).iter().enumerate() {
                pg.left[j] += v;
            }

            let t_right = conjugate_by_offset(&pair.right.to_transform(), &offset);
            let (b, gk, gk1, gt) =
                temporal_loss(&fa.right, &fb.right, &da.right, Some(&db.right), k, &t_right, weights)?;
            breakdown.accumulate(&b);
            axpy(&mut depth_grads[idx].right, 1.0, &gk);
            axpy(&mut depth_grads[idx + 1].right, 1.0, &gk1);
            for (j, v) in gt.through_offset(&offset).to_pose(&pair.right).iter().enumerate() {
                pg.right[j] += v;
            }
        }
        pose_grads.push(pg);
    }
    debug_assert!(depth_grads.iter().all(|g| g.left.len() == n));
    Ok(SequenceLoss {
        value: breakdown.weighted_total(weights),
        breakdown,
        grad: SequenceGradient {
            depths: depth_grads,
            poses: pose_grads,
        },
    })
}

/// All loss families for one pair of consecutive stereo frames.
pub fn total_loss(
    frame_k: &StereoFrame,
    frame_k1: &StereoFrame,
    depths_k: &StereoDepths,
    depths_k1: &StereoDepths,
    poses: &PosePair,
    rig: &StereoRig,
    weights: &LossWeights,
) -> Result<SequenceLoss> {
    sequence_loss(
        &[frame_k.clone(), frame_k1.clone()],
        &[depths_k.clone(), depths_k1.clone()],
        std::slice::from_ref(poses),
        rig,
        weights,
    )
}
