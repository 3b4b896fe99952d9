//! Trajectory drift over fixed-length segments, similarity alignment and
//! depth error metrics.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::imagegrid::{median, DepthMap};

/// Segment lengths in meters.
pub const SEGMENT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
/// Default ground-truth depth cap in meters.
pub const DEFAULT_DEPTH_CAP: f64 = 80.0;

/// Camera-to-world poses in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<RigidTransform>,
    frame_indices: Vec<usize>,
}

impl Trajectory {
    /// Frame indices `0..n`.
    pub fn new(poses: Vec<RigidTransform>) -> Result<Self> {
        let n = poses.len();
        Self::with_indices(poses, (0..n).collect())
    }

    pub fn with_indices(poses: Vec<RigidTransform>, frame_indices: Vec<usize>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::InvalidArgument("trajectory has no poses".into()));
        }
        if frame_indices.len() != poses.len() {
            return Err(Error::LengthMismatch(poses.len(), frame_indices.len()));
        }
        if frame_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "frame indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            poses,
            frame_indices,
        })
    }

    /// Integrates relative motions `T_{k,k+1}` (frame-`k` points to frame `k+1`) from the identity.
    pub fn from_motions(motions: &[RigidTransform]) -> Self {
        let mut pose = RigidTransform::identity();
        let mut poses = vec![pose];
        for m in motions {
            pose = pose.compose(&m.inverse());
            poses.push(pose);
        }
        Self::new(poses).expect("non-empty")
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.frame_indices
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Cumulative distance travelled up to each frame; starts at 0.
    pub fn path_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(acc);
        for w in self.poses.windows(2) {
            acc += (w[1].translation - w[0].translation).norm();
            out.push(acc);
        }
        out
    }

    /// Relative motions `T_{k,k+1}` between consecutive frames.
    pub fn motions(&self) -> Vec<RigidTransform> {
        self.poses
            .windows(2)
            .map(|w| w[1].inverse().compose(&w[0]))
            .collect()
    }

    /// Applies a similarity to every pose: positions map through `s R p + t`, orientations through `R`.
    pub fn transformed(&self, sim: &Similarity) -> Self {
        let poses = self
            .poses
            .iter()
            .map(|p| RigidTransform {
                rotation: sim.rotation * p.rotation,
                translation: sim.apply(&p.translation),
            })
            .collect();
        Self {
            poses,
            frame_indices: self.frame_indices.clone(),
        }
    }
}

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    #[default]
    None,
    /// Rotation and translation.
    Rigid,
    /// Rotation, translation and scale.
    Similarity,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "6dof" => Ok(Self::Rigid),
            "7dof" => Ok(Self::Similarity),
            other => Err(Error::InvalidArgument(format!(
                "alignment must be none, 6dof or 7dof, got `{other}`"
            ))),
        }
    }
}

/// Closed-form least-squares similarity (Umeyama) mapping estimate positions onto reference positions.
pub fn align_sim3(estimate: &Trajectory, reference: &Trajectory) -> Result<(Trajectory, Similarity)> {
    let sim = umeyama(&estimate.positions(), &reference.positions(), true)?;
    Ok((estimate.transformed(&sim), sim))
}

/// Same as [`align_sim3`] with the scale fixed to one.
pub fn align_rigid(estimate: &Trajectory, reference: &Trajectory) -> Result<(Trajectory, Similarity)> {
    let sim = umeyama(&estimate.positions(), &reference.positions(), false)?;
    Ok((estimate.transformed(&sim), sim))
}

pub fn align(
    estimate: &Trajectory,
    reference: &Trajectory,
    mode: Alignment,
) -> Result<(Trajectory, Similarity)> {
    match mode {
        Alignment::None => Ok((estimate.clone(), Similarity::identity())),
        Alignment::Rigid => align_rigid(estimate, reference),
        Alignment::Similarity => align_sim3(estimate, reference),
    }
}

/// Root mean square distance between corresponding positions.
pub fn position_rmse(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let sum: f64 = a
        .poses
        .iter()
        .zip(&b.poses)
        .map(|(p, q)| (p.translation - q.translation).norm_squared())
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch(src.len(), dst.len()));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "alignment needs at least 3 poses, got {n}"
        )));
    }
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / nf;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    let mut cov_src = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - mu_s, d - mu_d);
        cov += b * a.transpose();
        cov_src += a * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= nf;
    cov_src /= nf;
    var_s /= nf;

    let spread = cov_src.symmetric_eigenvalues();
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::DegenerateConfiguration(
            "estimate positions are coincident or collinear".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * vt;
    let d = svd.singular_values;
    let scale = if with_scale {
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_s
    } else {
        1.0
    };
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// One evaluated segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentError {
    pub first: usize,
    pub last: usize,
    pub length: f64,
    /// Translation error norm in meters.
    pub translation: f64,
    /// Rotation error angle in degrees.
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    pub length: f64,
    pub segments: usize,
    /// Percent.
    pub t_rel: f64,
    /// Degrees per 100 m.
    pub r_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// Percent.
    pub t_rel: f64,
    /// Degrees per 100 m.
    pub r_rel: f64,
    /// Only lengths with at least one segment.
    pub per_length: Vec<LengthStats>,
    pub segments: Vec<SegmentError>,
}

/// Error of the estimated motion over `first..last` against the reference.
pub fn segment_error(
    estimate: &Trajectory,
    reference: &Trajectory,
    first: usize,
    last: usize,
    length: f64,
) -> SegmentError {
    let (e, r) = (&estimate.poses, &reference.poses);
    let delta_ref = r[first].inverse().compose(&r[last]);
    let delta_est = e[first].inverse().compose(&e[last]);
    let err = delta_ref.inverse().compose(&delta_est);
    SegmentError {
        first,
        last,
        length,
        translation: err.translation.norm(),
        rotation_deg: err.rotation_angle().to_degrees(),
    }
}

fn rms_rates(segments: &[SegmentError]) -> (f64, f64) {
    let n = segments.len() as f64;
    let t: f64 = segments.iter().map(|s| (s.translation / s.length).powi(2)).sum();
    let r: f64 = segments.iter().map(|s| (s.rotation_deg / s.length).powi(2)).sum();
    ((t / n).sqrt() * 100.0, (r / n).sqrt() * 100.0)
}

/// Segment drift: for every start frame and every length in [`SEGMENT_LENGTHS`],
/// the segment ends at the first frame whose reference path length exceeds
/// the start's by more than the length.
pub fn drift_metrics(estimate: &Trajectory, reference: &Trajectory) -> Result<DriftReport> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch(estimate.len(), reference.len()));
    }
    let dist = reference.path_lengths();
    let n = dist.len();
    let mut segments = Vec::new();
    for first in 0..n {
        for &length in &SEGMENT_LENGTHS {
            let target = dist[first] + length;
            // dist is non-decreasing
            let last = first + dist[first..].partition_point(|&d| d <= target);
            if last >= n {
                continue;
            }
            segments.push(segment_error(estimate, reference, first, last, length));
        }
    }
    if segments.is_empty() {
        return Err(Error::TooShort {
            min_length: SEGMENT_LENGTHS[0],
            path_length: dist[n - 1],
        });
    }
    let per_length = SEGMENT_LENGTHS
        .iter()
        .filter_map(|&length| {
            let subset: Vec<SegmentError> =
                segments.iter().copied().filter(|s| s.length == length).collect();
            if subset.is_empty() {
                return None;
            }
            let (t_rel, r_rel) = rms_rates(&subset);
            Some(LengthStats {
                length,
                segments: subset.len(),
                t_rel,
                r_rel,
            })
        })
        .collect();
    let (t_rel, r_rel) = rms_rates(&segments);
    Ok(DriftReport {
        t_rel,
        r_rel,
        per_length,
        segments,
    })
}

impl DriftReport {
    /// `length,segments,t_rel_percent,r_rel_deg_per_100m` rows plus an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("length,segments,t_rel_percent,r_rel_deg_per_100m\n");
        for s in &self.per_length {
            writeln!(out, "{},{},{:.6},{:.6}", s.length, s.segments, s.t_rel, s.r_rel).unwrap();
        }
        writeln!(
            out,
            "all,{},{:.6},{:.6}",
            self.segments.len(),
            self.t_rel,
            self.r_rel
        )
        .unwrap();
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "t_rel: {:.2} %", self.t_rel).unwrap();
        writeln!(out, "r_rel: {:.2} deg/100m", self.r_rel).unwrap();
        writeln!(out, "segments: {}", self.segments.len()).unwrap();
        for s in &self.per_length {
            writeln!(
                out,
                "  {:>4} m  n={:<6} t_rel {:>8.4} %  r_rel {:>8.4} deg/100m",
                s.length, s.segments, s.t_rel, s.r_rel
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEvalReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    /// Pixels evaluated.
    pub pixels: usize,
}

impl DepthEvalReport {
    pub const CSV_HEADER: &'static str = "abs_rel,sq_rel,rmse,rmse_log,pixels";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.pixels
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "abs_rel {:.4}  sq_rel {:.4}  rmse {:.4}  rmse_log {:.4}  ({} px)",
            self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.pixels
        )
    }
}

pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    cap: f64,
    median_scale: bool,
) -> Result<DepthEvalReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::dims(
            format!("{}x{}", gt.width(), gt.height()),
            format!("{}x{}", pred.width(), pred.height()),
        ));
    }
    depth_metrics_raw(pred.data(), gt.data(), cap, median_scale)
}

/// Like [`depth_metrics`] on flat slices; ground-truth entries outside `(0, cap]` are skipped.
pub fn depth_metrics_raw(
    pred: &[f64],
    gt: &[f64],
    cap: f64,
    median_scale: bool,
) -> Result<DepthEvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(gt.len(), pred.len()));
    }
    let support: Vec<usize> = (0..gt.len()).filter(|&i| gt[i] > 0.0 && gt[i] <= cap).collect();
    if support.is_empty() {
        return Err(Error::EmptyMask);
    }
    if let Some(&i) = support.iter().find(|&&i| !(pred[i] > 0.0 && pred[i].is_finite())) {
        return Err(Error::NonPositiveDepth(pred[i]));
    }
    let factor = if median_scale {
        let g: Vec<f64> = support.iter().map(|&i| gt[i]).collect();
        let p: Vec<f64> = support.iter().map(|&i| pred[i]).collect();
        median(&g) / median(&p)
    } else {
        1.0
    };
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    for &i in &support {
        let (p, g) = (pred[i] * factor, gt[i]);
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        sq_log += (p.ln() - g.ln()).powi(2);
    }
    let n = support.len() as f64;
    Ok(DepthEvalReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        pixels: support.len(),
    })
}
