//! Analytic ray-cast renderer for textured planar scenes seen by a stereo rig.
//!
//! Textures are sums of six fixed-frequency sinusoids with seed-derived
//! phases, defined in plane coordinates divided by the plane's distance. Scaling
//! every depth and the baseline by the same factor therefore leaves the
//! rendered images unchanged.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose6DoF, RigidTransform, StereoRig};
use crate::imagegrid::{DepthMap, ImageBuffer};
use crate::losses::{PosePair, StereoDepths, StereoFrame};

/// Wavelengths in distance-normalised plane units (multiply by the focal length for pixels).
const WAVELENGTHS: [f64; 6] = [0.5, 0.65, 0.85, 1.1, 1.45, 2.0];
/// Orientation of each wave vector (radians).
const ORIENTATIONS: [f64; 6] = [0.3, 1.35, 2.4, 0.85, 1.9, 2.9];
const AMPLITUDE: f64 = 0.07;
const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    /// Plane `z = depth` facing the camera.
    FrontoParallel { depth: f64 },
    /// Background plane at `far` plus a ledge plane at `near` covering `y >= 0` (lower half).
    Stairs { near: f64, far: f64 },
    /// Plane through `(0, 0, depth)` rotated by `angle` radians about the camera Y axis.
    Slanted { depth: f64, angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub rig: StereoRig,
}

/// Focal length `0.625 * width`, centred principal point, 0.5 m baseline.
pub fn default_rig(width: usize, height: usize) -> StereoRig {
    let k = Intrinsics::centered(0.625 * width as f64, width, height).expect("positive focal length");
    StereoRig::new(k, 0.5).expect("positive baseline")
}

impl SceneSpec {
    pub fn new(kind: SceneKind, seed: u64, width: usize, height: usize) -> Result<Self> {
        Self::with_rig(kind, seed, width, height, default_rig(width, height))
    }

    pub fn with_rig(
        kind: SceneKind,
        seed: u64,
        width: usize,
        height: usize,
        rig: StereoRig,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            seed,
            width,
            height,
            rig,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidArgument(format!(
                "image must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        let depths: &[f64] = match &self.kind {
            SceneKind::FrontoParallel { depth } => &[*depth],
            SceneKind::Stairs { near, far } => {
                if near >= far {
                    return Err(Error::InvalidArgument(format!(
                        "stairs need near < far, got {near} and {far}"
                    )));
                }
                &[*near, *far]
            }
            SceneKind::Slanted { depth, angle } => {
                if !(angle.abs() < 1.2) {
                    return Err(Error::InvalidArgument(format!(
                        "slant angle {angle} too steep"
                    )));
                }
                &[*depth]
            }
        };
        for &d in depths {
            if !(1.0..=200.0).contains(&d) {
                return Err(Error::InvalidArgument(format!(
                    "plane depth {d} outside [1, 200] m"
                )));
            }
        }
        Ok(())
    }

    /// Same scene with every depth and the baseline multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let kind = match self.kind {
            SceneKind::FrontoParallel { depth } => SceneKind::FrontoParallel { depth: depth * s },
            SceneKind::Stairs { near, far } => SceneKind::Stairs {
                near: near * s,
                far: far * s,
            },
            SceneKind::Slanted { depth, angle } => SceneKind::Slanted {
                depth: depth * s,
                angle,
            },
        };
        let rig = self.rig.with_baseline(self.rig.baseline * s)?;
        Self::with_rig(kind, self.seed, self.width, self.height, rig)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub left: ImageBuffer,
    pub right: ImageBuffer,
    pub gt_depth_left: DepthMap,
    pub gt_depth_right: DepthMap,
    /// Left camera to world.
    pub camera_pose_world: RigidTransform,
}

impl RenderedFrame {
    pub fn stereo(&self) -> StereoFrame {
        StereoFrame {
            left: self.left.clone(),
            right: self.right.clone(),
        }
    }

    pub fn depths(&self) -> StereoDepths {
        StereoDepths {
            left: self.gt_depth_left.clone(),
            right: self.gt_depth_right.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Texture {
    /// `[channel][wave]`
    phases: [[f64; 6]; CHANNELS],
}

impl Texture {
    fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phases = [[0.0; 6]; CHANNELS];
        for row in phases.iter_mut() {
            for p in row.iter_mut() {
                *p = rng.gen_range(0.0..std::f64::consts::TAU);
            }
        }
        Self { phases }
    }

    fn eval(&self, a: f64, b: f64, channel: usize) -> f64 {
        let mut v = 0.5;
        for i in 0..6 {
            let k = std::f64::consts::TAU / WAVELENGTHS[i];
            let (s, c) = ORIENTATIONS[i].sin_cos();
            v += AMPLITUDE * (k * (c * a + s * b) + self.phases[channel][i]).sin();
        }
        v
    }
}

#[derive(Debug, Clone)]
struct Plane {
    normal: Vector3<f64>,
    origin: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    scale: f64,
    /// Only points with `y >= 0` belong to the plane.
    lower_half_only: bool,
    texture: Texture,
}

impl Plane {
    fn fronto(depth: f64, texture: Texture, lower_half_only: bool) -> Self {
        Self {
            normal: Vector3::z(),
            origin: Vector3::new(0.0, 0.0, depth),
            e1: Vector3::x(),
            e2: Vector3::y(),
            scale: 1.0 / depth,
            lower_half_only,
            texture,
        }
    }

    /// Ray parameter of the intersection, if the ray hits this plane in front of the origin.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Result<Option<f64>> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return Err(Error::DegenerateGeometry(
                "viewing ray parallel to scene plane".into(),
            ));
        }
        let lambda = self.normal.dot(&(self.origin - origin)) / denom;
        if !(lambda > 0.0) {
            return Ok(None);
        }
        let hit = origin + dir * lambda;
        if self.lower_half_only && hit.y < 0.0 {
            return Ok(None);
        }
        Ok(Some(lambda))
    }

    fn shade(&self, hit: &Vector3<f64>, channel: usize) -> f64 {
        let rel = hit - self.origin;
        self.texture
            .eval(self.e1.dot(&rel) * self.scale, self.e2.dot(&rel) * self.scale, channel)
    }
}

fn scene_planes(spec: &SceneSpec) -> Vec<Plane> {
    let tex = Texture::from_seed(spec.seed);
    match spec.kind {
        SceneKind::FrontoParallel { depth } => vec![Plane::fronto(depth, tex, false)],
        SceneKind::Stairs { near, far } => vec![
            Plane::fronto(far, tex, false),
            Plane::fronto(near, Texture::from_seed(spec.seed.wrapping_add(1)), true),
        ],
        SceneKind::Slanted { depth, angle } => {
            let (s, c) = angle.sin_cos();
            vec![Plane {
                normal: Vector3::new(s, 0.0, c),
                origin: Vector3::new(0.0, 0.0, depth),
                e1: Vector3::new(c, 0.0, -s),
                e2: Vector3::y(),
                scale: 1.0 / depth,
                lower_half_only: false,
                texture: tex,
            }]
        }
    }
}

fn render_view(
    spec: &SceneSpec,
    planes: &[Plane],
    camera_to_world: &RigidTransform,
) -> Result<(ImageBuffer, DepthMap)> {
    let (w, h) = (spec.width, spec.height);
    let k = &spec.rig.intrinsics;
    let origin = camera_to_world.translation;
    let mut pixels = Vec::with_capacity(w * h * CHANNELS);
    let mut depth = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            // Unit-depth camera ray, so the ray parameter is the camera-frame depth.
            let dir = camera_to_world.rotation * k.ray(x as f64, y as f64);
            let mut best: Option<(f64, &Plane)> = None;
            for plane in planes {
                if let Some(lambda) = plane.intersect(&origin, &dir)? {
                    if best.map_or(true, |(b, _)| lambda < b) {
                        best = Some((lambda, plane));
                    }
                }
            }
            let (lambda, plane) = best.ok_or_else(|| {
                Error::DegenerateGeometry(format!("pixel ({x}, {y}) sees no scene surface"))
            })?;
            let hit = origin + dir * lambda;
            for c in 0..CHANNELS {
                pixels.push(plane.shade(&hit, c));
            }
            depth.push(lambda);
        }
    }
    Ok((ImageBuffer::new(w, h, CHANNELS, pixels)?, DepthMap::new(w, h, depth)?))
}

/// Renders the stereo pair whose left camera has pose `camera_pose` (camera to world).
pub fn render_frame(spec: &SceneSpec, camera_pose: &RigidTransform) -> Result<RenderedFrame> {
    spec.validate()?;
    let planes = scene_planes(spec);
    let right_pose = camera_pose.compose(&RigidTransform::from_translation(
        spec.rig.right_camera_offset(),
    ));
    let (left, gt_depth_left) = render_view(spec, &planes, camera_pose)?;
    let (right, gt_depth_right) = render_view(spec, &planes, &right_pose)?;
    Ok(RenderedFrame {
        left,
        right,
        gt_depth_left,
        gt_depth_right,
        camera_pose_world: *camera_pose,
    })
}

/// Renders frame 0 at the world origin and one more frame per motion.
///
/// Each motion is the point transform `T_{k,k+1}` (frame-`k` camera coordinates
/// to frame-`k+1` camera coordinates); a camera moving forward by `s` meters is
/// the motion with translation `(0, 0, -s)`.
pub fn render_sequence(spec: &SceneSpec, motions: &[Pose6DoF]) -> Result<Vec<RenderedFrame>> {
    let mut pose = RigidTransform::identity();
    let mut frames = Vec::with_capacity(motions.len() + 1);
    frames.push(render_frame(spec, &pose)?);
    for m in motions {
        pose = pose.compose(&m.to_transform().inverse());
        frames.push(render_frame(spec, &pose)?);
    }
    Ok(frames)
}

/// Ground-truth relative motion between two rendered frames.
pub fn relative_motion(from: &RenderedFrame, to: &RenderedFrame) -> RigidTransform {
    to.camera_pose_world.inverse().compose(&from.camera_pose_world)
}

/// Stereo frames, true depths and true pose pairs for a rendered sequence.
pub fn ground_truth(frames: &[RenderedFrame]) -> (Vec<StereoFrame>, Vec<StereoDepths>, Vec<PosePair>) {
    let stereo = frames.iter().map(RenderedFrame::stereo).collect();
    let depths = frames.iter().map(RenderedFrame::depths).collect();
    let poses = frames
        .windows(2)
        .map(|w| PosePair::both(Pose6DoF::from_transform(&relative_motion(&w[0], &w[1]))))
        .collect();
    (stereo, depths, poses)
}

/// Fraction of pixels whose central-difference gradient magnitude (channel mean) exceeds `threshold`.
pub fn gradient_coverage(img: &ImageBuffer, threshold: f64) -> f64 {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (xa, xb) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (ya, yb) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let mut mag = 0.0;
            for ch in 0..c {
                let gx = (img.get(xb, y, ch) - img.get(xa, y, ch)) / (xb - xa) as f64;
                let gy = (img.get(x, yb, ch) - img.get(x, ya, ch)) / (yb - ya) as f64;
                mag += (gx * gx + gy * gy).sqrt();
            }
            if mag / c as f64 > threshold {
                count += 1;
            }
        }
    }
    count as f64 / (w * h) as f64
}
