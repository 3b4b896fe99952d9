//! Adam-driven direct optimisation of log-depth maps and relative poses.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose6DoF, StereoRig};
use crate::imagegrid::{DepthMap, ImageBuffer};
use crate::losses::{
    sequence_loss, spatial_loss, temporal_loss, LossBreakdown, LossWeights, PosePair,
    StereoDepths, StereoFrame,
};

/// Per-parameter Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// `beta1 = 0.9`, `beta2 = 0.99`, `epsilon = 1e-8`.
    pub fn new(len: usize) -> Self {
        Self::with_betas(len, 0.9, 0.99, 1e-8)
    }

    pub fn with_betas(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    adam_step_scaled(state, params, grads, lr, None)
}

/// Adam update where parameter `i` uses learning rate `lr * lr_scale[i]`.
pub fn adam_step_scaled(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    lr_scale: Option<&[f64]>,
) -> Result<()> {
    let n = state.len();
    if params.len() != n {
        return Err(Error::LengthMismatch(n, params.len()));
    }
    if grads.len() != n {
        return Err(Error::LengthMismatch(n, grads.len()));
    }
    if let Some(s) = lr_scale {
        if s.len() != n {
            return Err(Error::LengthMismatch(n, s.len()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        let rate = lr * lr_scale.map_or(1.0, |s| s[i]);
        params[i] -= rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Step-halving learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub initial_lr: f64,
    /// Iteration cap.
    pub total_iterations: usize,
    /// Learning-rate multiplier for the six parameters of each pose.
    pub pose_lr_scale: f64,
    /// Additional learning-rate multiplier for the three rotation parameters of each pose.
    pub rotation_weight: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            initial_lr: 5e-3,
            total_iterations: 2000,
            pose_lr_scale: 0.1,
            rotation_weight: 1.0,
        }
    }
}

impl Schedule {
    pub fn new(initial_lr: f64, total_iterations: usize) -> Result<Self> {
        let s = Self {
            initial_lr,
            total_iterations,
            ..Self::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidValue {
                key: "learning_rate".into(),
                message: format!("must be positive, got {}", self.initial_lr),
            });
        }
        if !(self.pose_lr_scale > 0.0 && self.pose_lr_scale.is_finite()) {
            return Err(Error::InvalidValue {
                key: "pose_lr_scale".into(),
                message: format!("must be positive, got {}", self.pose_lr_scale),
            });
        }
        if !(self.rotation_weight > 0.0 && self.rotation_weight.is_finite()) {
            return Err(Error::InvalidValue {
                key: "rotation_weight".into(),
                message: format!("must be positive, got {}", self.rotation_weight),
            });
        }
        Ok(())
    }

    /// Halving period: `ceil(total / 5)`, at least one iteration.
    pub fn period(&self) -> usize {
        self.total_iterations.div_ceil(5).max(1)
    }

    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let halvings = (iteration / self.period()).min(1023) as i32;
        self.initial_lr * 0.5f64.powi(halvings)
    }
}

/// Relative change of the loss over this many iterations decides convergence.
pub const CONVERGENCE_WINDOW: usize = 50;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub breakdown: LossBreakdown,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn initial(&self) -> Option<f64> {
        self.records.first().map(|r| r.total)
    }

    pub fn last(&self) -> Option<f64> {
        self.records.last().map(|r| r.total)
    }

    pub fn best(&self) -> Option<f64> {
        self.records.iter().map(|r| r.total).reduce(f64::min)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `iteration,<component...>,total` with one row per evaluated iterate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration");
        for name in LossBreakdown::NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",total\n");
        for r in &self.records {
            write!(out, "{}", r.iteration).unwrap();
            for v in r.breakdown.as_array() {
                write!(out, ",{v:e}").unwrap();
            }
            writeln!(out, ",{:e}", r.total).unwrap();
        }
        out
    }
}

/// Parameters with the lowest loss seen and the full loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub params: Vec<f64>,
    pub best_loss: f64,
    pub history: LossHistory,
    /// Adam steps taken.
    pub iterations: usize,
    pub converged: bool,
}

/// Generic driver: evaluates `objective`, keeps the best iterate, stops on
/// convergence or at the iteration cap.
pub fn minimize<F>(
    mut params: Vec<f64>,
    lr_scale: Option<&[f64]>,
    schedule: &Schedule,
    mut objective: F,
) -> Result<RunOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, LossBreakdown, Vec<f64>)>,
{
    schedule.validate()?;
    let mut state = AdamState::new(params.len());
    let mut history = LossHistory::default();
    let mut best = (f64::INFINITY, params.clone());
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=schedule.total_iterations {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                loss: f64::NAN,
            });
        }
        let (loss, breakdown, grad) = match objective(&params) {
            Ok(v) => v,
            // numerical failures after the first step come from the updates themselves
            Err(e) if it > 0 && e.is_numerical() => {
                log::debug!("objective failed at iteration {it}: {e}");
                return Err(Error::Divergence {
                    iteration: it,
                    loss: history.last().unwrap_or(f64::NAN),
                });
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                loss,
            });
        }
        history.records.push(LossRecord {
            iteration: it,
            breakdown,
            total: loss,
        });
        if loss < best.0 {
            best = (loss, params.clone());
        }
        if it >= CONVERGENCE_WINDOW {
            let before = history.records[it - CONVERGENCE_WINDOW].total;
            let change = (before - loss).abs();
            if change <= CONVERGENCE_TOLERANCE * before.abs() || (before == 0.0 && loss == 0.0) {
                converged = true;
                break;
            }
        }
        if it == schedule.total_iterations {
            break;
        }
        adam_step_scaled(&mut state, &mut params, &grad, schedule.learning_rate(it), lr_scale)?;
        iterations += 1;
        log::trace!("iteration {it}: loss {loss:e}");
    }
    log::debug!(
        "optimisation finished after {iterations} steps, best loss {:e}",
        best.0
    );
    Ok(RunOutcome {
        params: best.1,
        best_loss: best.0,
        history,
        iterations,
        converged,
    })
}

fn log_depths(d: &StereoDepths) -> Vec<f64> {
    let mut p = d.left.log_depth();
    p.extend(d.right.log_depth());
    p
}

fn depths_from(params: &[f64], w: usize, h: usize) -> Result<StereoDepths> {
    let n = w * h;
    if let Some(bad) = params[..2 * n].iter().find(|p| !p.exp().is_normal()) {
        return Err(Error::DegenerateGeometry(format!(
            "log-depth {bad} has no finite positive depth"
        )));
    }
    Ok(StereoDepths {
        left: DepthMap::from_log_depth(w, h, &params[..n])?,
        right: DepthMap::from_log_depth(w, h, &params[n..2 * n])?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthEstimate {
    pub depths: StereoDepths,
    pub history: LossHistory,
    pub iterations: usize,
    pub converged: bool,
}

/// Recovers metric left and right depth maps from one stereo pair by
/// minimising the spatial losses over log-depth. Both maps start from `init`.
pub fn optimize_depth_stereo(
    left: &ImageBuffer,
    right: &ImageBuffer,
    rig: &StereoRig,
    init: &DepthMap,
    weights: &LossWeights,
    schedule: &Schedule,
) -> Result<DepthEstimate> {
    weights.validate()?;
    let (w, h) = (init.width(), init.height());
    if left.width() != w || left.height() != h {
        return Err(Error::dims(format!("{w}x{h}"), left.shape_string()));
    }
    let frame = StereoFrame {
        left: left.clone(),
        right: right.clone(),
    };
    let weights = weights.spatial_only();
    let start = StereoDepths {
        left: init.clone(),
        right: init.clone(),
    };
    let n = w * h;
    let out = minimize(log_depths(&start), None, schedule, |p| {
        let depths = depths_from(p, w, h)?;
        let (b, g) = spatial_loss(&frame, &depths, rig, &weights)?;
        let mut grad = Vec::with_capacity(2 * n);
        grad.extend(g.left.iter().zip(depths.left.data()).map(|(g, z)| g * z));
        grad.extend(g.right.iter().zip(depths.right.data()).map(|(g, z)| g * z));
        Ok((b.weighted_total(&weights), b, grad))
    })?;
    Ok(DepthEstimate {
        depths: depths_from(&out.params, w, h)?,
        history: out.history,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose6DoF,
    pub history: LossHistory,
    pub iterations: usize,
    pub converged: bool,
}

fn pose_scales(poses: usize, prefix: usize, schedule: &Schedule) -> Vec<f64> {
    let t = schedule.pose_lr_scale;
    let r = t * schedule.rotation_weight;
    let mut s = vec![1.0; prefix];
    for _ in 0..poses {
        s.extend([t, t, t, r, r, r]);
    }
    s
}

/// Recovers the motion `T_{k,k+1}` of one camera from two images with known
/// depth by minimising the temporal losses over the six pose parameters.
///
/// With `depth_k1` the backward photometric term and the 3D registration term
/// are included as well; without it only the forward photometric term is used.
#[allow(clippy::too_many_arguments)]
pub fn optimize_pose_temporal(
    image_k: &ImageBuffer,
    image_k1: &ImageBuffer,
    depth_k: &DepthMap,
    depth_k1: Option<&DepthMap>,
    k: &Intrinsics,
    init: &Pose6DoF,
    weights: &LossWeights,
    schedule: &Schedule,
) -> Result<PoseEstimate> {
    weights.validate()?;
    let weights = weights.temporal_only();
    let scales = pose_scales(1, 0, schedule);
    let out = minimize(init.to_array().to_vec(), Some(&scales), schedule, |p| {
        let pose = Pose6DoF::from_array(p.try_into().expect("six pose parameters"));
        let t = pose.to_transform();
        let (b, _, _, gt) = temporal_loss(image_k, image_k1, depth_k, depth_k1, k, &t, &weights)?;
        Ok((b.weighted_total(&weights), b, gt.to_pose(&pose).to_vec()))
    })?;
    Ok(PoseEstimate {
        pose: Pose6DoF::from_array(out.params[..6].try_into().expect("six pose parameters")),
        history: out.history,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate {
    pub depths: Vec<StereoDepths>,
    pub poses: Vec<PosePair>,
    /// Per pair: largest absolute translation and rotation difference between the left and right estimates.
    pub consistency: Vec<(f64, f64)>,
    pub history: LossHistory,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest absolute `(translation, rotation)` parameter difference of a pose pair.
pub fn consistency_residual(pair: &PosePair) -> (f64, f64) {
    let (l, r) = (pair.left.to_array(), pair.right.to_array());
    let t = (0..3).map(|i| (l[i] - r[i]).abs()).fold(0.0, f64::max);
    let o = (3..6).map(|i| (l[i] - r[i]).abs()).fold(0.0, f64::max);
    (t, o)
}

/// Minimises the full objective over every depth map and both pose estimates of every pair.
pub fn optimize_joint(
    frames: &[StereoFrame],
    init_depths: &[StereoDepths],
    init_poses: &[PosePair],
    rig: &StereoRig,
    weights: &LossWeights,
    schedule: &Schedule,
) -> Result<JointEstimate> {
    weights.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "joint optimisation needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    if init_depths.len() != frames.len() || init_poses.len() + 1 != frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames need as many depth pairs and one pose pair fewer (got {} and {})",
            frames.len(),
            init_depths.len(),
            init_poses.len()
        )));
    }
    let (w, h) = (init_depths[0].left.width(), init_depths[0].left.height());
    let n = w * h;
    let depth_len = 2 * n * frames.len();
    let mut params = Vec::with_capacity(depth_len + 12 * init_poses.len());
    for d in init_depths {
        params.extend(log_depths(d));
    }
    for p in init_poses {
        params.extend(p.left.to_array());
        params.extend(p.right.to_array());
    }
    let scales = pose_scales(2 * init_poses.len(), depth_len, schedule);

    let unpack = |p: &[f64]| -> Result<(Vec<StereoDepths>, Vec<PosePair>)> {
        let depths = (0..frames.len())
            .map(|f| depths_from(&p[2 * n * f..2 * n * (f + 1)], w, h))
            .collect::<Result<Vec<_>>>()?;
        let poses = p[depth_len..]
            .chunks_exact(12)
            .map(|c| PosePair {
                left: Pose6DoF::from_array(c[..6].try_into().unwrap()),
                right: Pose6DoF::from_array(c[6..].try_into().unwrap()),
            })
            .collect();
        Ok((depths, poses))
    };

    let out = minimize(params, Some(&scales), schedule, |p| {
        let (depths, poses) = unpack(p)?;
        let l = sequence_loss(frames, &depths, &poses, rig, weights)?;
        let mut grad = Vec::with_capacity(p.len());
        for (g, d) in l.grad.depths.iter().zip(&depths) {
            grad.extend(g.left.iter().zip(d.left.data()).map(|(g, z)| g * z));
            grad.extend(g.right.iter().zip(d.right.data()).map(|(g, z)| g * z));
        }
        for g in &l.grad.poses {
            grad.extend(g.left);
            grad.extend(g.right);
        }
        Ok((l.value, l.breakdown, grad))
    })?;
    let (depths, poses) = unpack(&out.params)?;
    Ok(JointEstimate {
        consistency: poses.iter().map(consistency_residual).collect(),
        depths,
        poses,
        history: out.history,
        iterations: out.iterations,
        converged: out.converged,
    })
}
