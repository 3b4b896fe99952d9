//! Pinhole camera, stereo rig, rigid motions and the disparity/depth relation.
//!
//! Frame convention: x right, y down, z forward. Pixel coordinates are
//! `(u, v)` with `u` the column (horizontal) and `v` the row. The left camera
//! is the reference; the right camera centre sits at `(+baseline, 0, 0)` in
//! the left frame, so a point seen at column `u_l` in the left image appears
//! at `u_r = u_l - disparity` in the right image.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Smallest camera-frame depth accepted by projection.
pub const EPSILON_Z: f64 = 1e-6;

/// Tolerance used when checking that a matrix is a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidArgument(
                "principal point must be finite".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Centred principal point and equal focal lengths for a `width x height` image.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
    }

    pub fn project(&self, p: &Point3) -> Result<(f64, f64)> {
        if !(p.z > EPSILON_Z) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.ray(u, v) * depth)
    }

    /// Viewing ray through `(u, v)` scaled to unit depth.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Partial derivatives of the projected `(u, v)` with respect to the point.
    pub(crate) fn projection_jacobian(&self, p: &Point3) -> (Vector3<f64>, Vector3<f64>) {
        let iz = 1.0 / p.z;
        let du = Vector3::new(self.fx * iz, 0.0, -self.fx * p.x * iz * iz);
        let dv = Vector3::new(0.0, self.fy * iz, -self.fy * p.y * iz * iz);
        (du, dv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub intrinsics: Intrinsics,
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: Intrinsics, baseline: f64) -> Result<Self> {
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        Ok(Self {
            intrinsics,
            baseline,
        })
    }

    /// `B * f`: disparity in pixels times depth in meters.
    pub fn disparity_constant(&self) -> f64 {
        self.baseline * self.intrinsics.fx
    }

    pub fn depth_to_disparity_px(&self, depth: f64) -> Result<f64> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.disparity_constant() / depth)
    }

    pub fn disparity_to_depth(&self, disparity: f64) -> Result<f64> {
        if !(disparity > 0.0) {
            return Err(Error::NonPositiveDisparity(disparity));
        }
        Ok(self.disparity_constant() / disparity)
    }

    /// Maps left-camera coordinates to right-camera coordinates.
    pub fn left_to_right(&self) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(-self.baseline, 0.0, 0.0))
    }

    /// Right-camera pose expressed in the left camera frame.
    pub fn right_camera_offset(&self) -> Vector3<f64> {
        Vector3::new(self.baseline, 0.0, 0.0)
    }

    pub fn with_baseline(&self, baseline: f64) -> Result<Self> {
        Self::new(self.intrinsics, baseline)
    }
}

/// Disparity divided by image width; dimensionless.
pub fn normalize_disparity(d_px: f64, image_width: usize) -> f64 {
    d_px / image_width as f64
}

pub fn denormalize_disparity(d_norm: f64, image_width: usize) -> f64 {
    d_norm * image_width as f64
}

/// Translation plus roll/pitch/yaw about the camera X, Y and Z axes.
///
/// The rotation is `Rz(yaw) * Ry(pitch) * Rx(roll)`. Angles are not wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6DoF {
    pub translation: Vector3<f64>,
    /// `[roll, pitch, yaw]` in radians.
    pub rotation: Vector3<f64>,
}

impl Pose6DoF {
    pub fn new(translation: [f64; 3], rotation: [f64; 3]) -> Self {
        Self {
            translation: Vector3::from(translation),
            rotation: Vector3::from(rotation),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new([x, y, z], [0.0; 3])
    }

    /// Parameters ordered `[tx, ty, tz, roll, pitch, yaw]`.
    pub fn to_array(&self) -> [f64; 6] {
        let t = &self.translation;
        let r = &self.rotation;
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    pub fn from_array(p: [f64; 6]) -> Self {
        Self::new([p[0], p[1], p[2]], [p[3], p[4], p[5]])
    }

    pub fn to_transform(&self) -> RigidTransform {
        euler_to_matrix(self)
    }

    /// Inverse of [`Pose6DoF::to_transform`] for pitch inside `(-pi/2, pi/2)`.
    pub fn from_transform(t: &RigidTransform) -> Self {
        let r = &t.rotation;
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Self {
            translation: t.translation,
            rotation: Vector3::new(roll, pitch, yaw),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn drot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

pub fn euler_to_matrix(pose: &Pose6DoF) -> RigidTransform {
    let [roll, pitch, yaw] = [pose.rotation.x, pose.rotation.y, pose.rotation.z];
    RigidTransform {
        rotation: rot_z(yaw) * rot_y(pitch) * rot_x(roll),
        translation: pose.translation,
    }
}

/// `dR/droll`, `dR/dpitch`, `dR/dyaw` at the given angles.
pub fn euler_derivatives(rotation: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(rotation.x), rot_y(rotation.y), rot_z(rotation.z));
    [
        rz * ry * drot_x(rotation.x),
        rz * drot_y(rotation.y) * rx,
        drot_z(rotation.z) * ry * rx,
    ]
}

/// Rotation and translation; maps a point `p` to `R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor: `rotation` must be orthonormal with determinant one.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let dev = rotation_deviation(&rotation);
        if !(dev <= ROTATION_TOLERANCE) || !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::DegenerateGeometry(format!(
                "not a rigid transform (rotation deviation {dev:.3e})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle in radians (axis-angle magnitude).
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let axis = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        let sin = axis.norm() / 2.0;
        let cos = (r.trace() - 1.0) / 2.0;
        sin.atan2(cos)
    }

    pub fn is_valid(&self) -> bool {
        rotation_deviation(&self.rotation) <= ROTATION_TOLERANCE
            && self.translation.iter().all(|x| x.is_finite())
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

pub fn transform_point(t: &RigidTransform, p: &Point3) -> Point3 {
    t.transform_point(p)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Largest absolute entry of `R^T R - I`, combined with `|det R - 1|`.
pub fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    if ortho.is_nan() || det.is_nan() {
        return f64::INFINITY;
    }
    ortho.max(det)
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

/// Loss gradient with respect to the entries of a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformGradient {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for TransformGradient {
    fn default() -> Self {
        Self::zero()
    }
}

impl TransformGradient {
    pub fn zero() -> Self {
        Self {
            rotation: Matrix3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    /// Accumulates the gradient of a transformed point `q = R p + t` given `dL/dq`.
    pub(crate) fn add_point(&mut self, p: &Point3, dq: &Vector3<f64>) {
        self.rotation += dq * p.transpose();
        self.translation += dq;
    }

    /// Converts a gradient taken with respect to `t.inverse()` into one with respect to `t`.
    pub fn through_inverse(&self, t: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation.transpose() - t.translation * self.translation.transpose(),
            translation: -(t.rotation * self.translation),
        }
    }

    /// Gradient with respect to `T` when the loss saw `T' = (R, t + (R - I) offset)`,
    /// i.e. the motion `T` re-expressed in a camera displaced by `offset`.
    pub fn through_offset(&self, offset: &Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation + self.translation * offset.transpose(),
            translation: self.translation,
        }
    }

    /// Chains through the Euler parameterisation: `[tx, ty, tz, roll, pitch, yaw]`.
    pub fn to_pose(&self, pose: &Pose6DoF) -> [f64; 6] {
        let d = euler_derivatives(&pose.rotation);
        let mut out = [0.0; 6];
        out[0] = self.translation.x;
        out[1] = self.translation.y;
        out[2] = self.translation.z;
        for (k, dr) in d.iter().enumerate() {
            out[3 + k] = self.rotation.component_mul(dr).sum();
        }
        out
    }
}

impl std::ops::AddAssign for TransformGradient {
    fn add_assign(&mut self, rhs: Self) {
        self.rotation += rhs.rotation;
        self.translation += rhs.translation;
    }
}

/// Motion `T` (left-camera frame) as seen by a camera displaced by `offset`
/// from the left camera with identical orientation.
pub fn conjugate_by_offset(t: &RigidTransform, offset: &Vector3<f64>) -> RigidTransform {
    RigidTransform {
        rotation: t.rotation,
        translation: t.translation + t.rotation * offset - offset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6DoF {
        Pose6DoF::new(
            [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ],
            [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-3.0..3.0),
            ],
        )
    }

    #[test]
    fn identity_euler() {
        let t = euler_to_matrix(&Pose6DoF::identity());
        assert_eq!(t, RigidTransform::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = euler_to_matrix(&Pose6DoF::new([1.0, 2.0, 3.0], [0.0, 0.0, FRAC_PI_2]));
        let q = t.transform_point(&Point3::new(1.0, 0.0, 0.0));
        assert!((q - Point3::new(1.0, 3.0, 3.0)).norm() < 1e-15);
    }

    #[test]
    fn euler_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let angles = [
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            ];
            let t = euler_to_matrix(&Pose6DoF::new([0.0; 3], angles));
            let back = euler_to_matrix(&Pose6DoF::from_transform(&t));
            assert!((t.rotation - back.rotation).abs().max() < 1e-10);
        }
    }

    #[test]
    fn euler_output_is_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let mut p = random_pose(&mut rng);
            p.rotation *= 10.0;
            assert!(rotation_deviation(&p.to_transform().rotation) < 1e-9);
        }
    }

    #[test]
    fn transform_point_matches_scalar_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let t = random_pose(&mut rng).to_transform();
            let p = Point3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let r = &t.rotation;
            let expect = [
                r[(0, 0)] * p.x + r[(0, 1)] * p.y + r[(0, 2)] * p.z + t.translation.x,
                r[(1, 0)] * p.x + r[(1, 1)] * p.y + r[(1, 2)] * p.z + t.translation.y,
                r[(2, 0)] * p.x + r[(2, 1)] * p.y + r[(2, 2)] * p.z + t.translation.z,
            ];
            let q = t.transform_point(&p);
            for k in 0..3 {
                assert!((q[k] - expect[k]).abs() <= 1e-12 * (1.0 + expect[k].abs()));
            }
            let back = t.inverse().transform_point(&q);
            assert!((back - p).norm() < 1e-12 * (1.0 + p.norm()));
        }
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(invert(&RigidTransform::identity()), RigidTransform::identity());
        let t = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(t.inverse().translation, Vector3::new(-1.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let t = random_pose(&mut rng).to_transform();
            let tt = t.inverse().inverse();
            assert!((tt.rotation - t.rotation).abs().max() < 1e-12);
            assert!((tt.translation - t.translation).abs().max() < 1e-12);
            let id = t.compose(&t.inverse());
            assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
            assert!(id.translation.abs().max() < 1e-12);
        }
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..200 {
            let a = random_pose(&mut rng).to_transform();
            let b = random_pose(&mut rng).to_transform();
            let p = Point3::new(rng.gen(), rng.gen(), rng.gen());
            let lhs = (a * b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn projection_cases() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        assert_eq!(k.project(&Point3::new(0.0, 0.0, 5.0)).unwrap(), (50.0, 50.0));
        assert_eq!(k.project(&Point3::new(1.0, 2.0, 10.0)).unwrap(), (60.0, 70.0));
        assert_eq!(k.backproject(60.0, 70.0, 10.0).unwrap(), Point3::new(1.0, 2.0, 10.0));
        assert_eq!(k.backproject(50.0, 50.0, 3.0).unwrap(), Point3::new(0.0, 0.0, 3.0));
        assert!(matches!(
            k.project(&Point3::new(1.0, 1.0, 0.0)),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(matches!(
            k.project(&Point3::new(1.0, 1.0, 5e-7)),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(k.backproject(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn project_backproject_round_trip() {
        let k = Intrinsics::new(718.856, 718.856, 607.19, 185.22).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..1000 {
            let p = Point3::new(
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.5..80.0),
            );
            let (u, v) = k.project(&p).unwrap();
            let q = k.backproject(u, v, p.z).unwrap();
            assert!((q - p).norm() <= 1e-10 * p.norm());
        }
        for v in 0..40 {
            for u in 0..120 {
                let p = k.backproject(u as f64, v as f64, 7.5).unwrap();
                let (pu, pv) = k.project(&p).unwrap();
                assert!((pu - u as f64).abs() < 1e-10 && (pv - v as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn disparity_depth_relation() {
        let rig = StereoRig::new(Intrinsics::new(720.0, 720.0, 0.0, 0.0).unwrap(), 0.5).unwrap();
        assert_eq!(rig.depth_to_disparity_px(360.0).unwrap(), 1.0);
        assert_eq!(rig.disparity_to_depth(1.0).unwrap(), 360.0);
        let kitti = StereoRig::new(Intrinsics::new(718.0, 718.0, 0.0, 0.0).unwrap(), 0.54).unwrap();
        assert!((kitti.depth_to_disparity_px(0.54 * 718.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rig.depth_to_disparity_px(0.0).is_err());
        assert!(matches!(
            rig.disparity_to_depth(0.0),
            Err(Error::NonPositiveDisparity(_))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let z: f64 = rng.gen_range(1.0..80.0);
            let d = rig.depth_to_disparity_px(z).unwrap();
            let back = rig.disparity_to_depth(d).unwrap();
            assert!((back - z).abs() <= 1e-12 * z);
            let (a, b): (f64, f64) = (rng.gen_range(0.01..100.0), rng.gen_range(0.01..100.0));
            if a < b {
                assert!(rig.disparity_to_depth(a).unwrap() > rig.disparity_to_depth(b).unwrap());
            }
        }
    }

    #[test]
    fn disparity_normalization() {
        assert_eq!(normalize_disparity(0.0, 416), 0.0);
        assert!((normalize_disparity(41.6, 416) - 0.1).abs() < 1e-15);
        assert_eq!(denormalize_disparity(normalize_disparity(3.0, 64), 64), 3.0);
    }

    #[test]
    fn euler_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            let d = euler_derivatives(&p.rotation);
            for k in 0..3 {
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a.rotation[k] += h;
                b.rotation[k] -= h;
                let fd = (a.to_transform().rotation - b.to_transform().rotation) / (2.0 * h);
                assert!((fd - d[k]).abs().max() < 1e-8);
            }
        }
    }

    #[test]
    fn transform_gradient_chains() {
        // Scalar loss L(T) = w . transform_point(T, p) checked through inverse and offset.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = Point3::new(0.3, -1.2, 4.0);
        let w = Vector3::new(0.7, -0.2, 1.1);
        let offset = Vector3::new(0.54, 0.0, 0.0);
        let loss_inv = |pose: &Pose6DoF| w.dot(&pose.to_transform().inverse().transform_point(&p));
        let loss_off = |pose: &Pose6DoF| {
            w.dot(&conjugate_by_offset(&pose.to_transform(), &offset).transform_point(&p))
        };
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let t = pose.to_transform();

            let mut g = TransformGradient::zero();
            g.add_point(&p, &w);
            let analytic_inv = g.through_inverse(&t).to_pose(&pose);
            let analytic_off = g.through_offset(&offset).to_pose(&pose);
            for k in 0..6 {
                let h = 1e-6;
                let mut a = pose.to_array();
                let mut b = pose.to_array();
                a[k] += h;
                b[k] -= h;
                let (pa, pb) = (Pose6DoF::from_array(a), Pose6DoF::from_array(b));
                let fd_inv = (loss_inv(&pa) - loss_inv(&pb)) / (2.0 * h);
                let fd_off = (loss_off(&pa) - loss_off(&pb)) / (2.0 * h);
                assert!((fd_inv - analytic_inv[k]).abs() < 1e-6, "inv {k}");
                assert!((fd_off - analytic_off[k]).abs() < 1e-6, "off {k}");
            }
        }
    }

    #[test]
    fn orthonormalize_projects_perturbed_rotation() {
        let r = Pose6DoF::new([0.0; 3], [0.2, -0.1, 0.4]).to_transform().rotation;
        let noisy = r + Matrix3::from_element(1e-7);
        let fixed = orthonormalize(&noisy);
        assert!(rotation_deviation(&fixed) < 1e-12);
        assert!((fixed - r).abs().max() < 1e-6);
    }
}
