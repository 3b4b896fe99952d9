//! Image containers, differentiable bilinear sampling and the stereo/temporal
//! coordinate maps used to synthesize one view from another.

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform, EPSILON_Z};

/// Row-major `height x width x channels` image of `f64` values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::dims(
                format!("{} values ({width}x{height}x{channels})", width * height * channels),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "image contains non-finite value {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }
}

macro_rules! scalar_map {
    ($name:ident, $what:literal, $ok:expr) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
                if data.len() != width * height {
                    return Err(Error::dims(
                        format!("{} entries ({width}x{height})", width * height),
                        format!("{} entries", data.len()),
                    ));
                }
                let ok: fn(f64) -> bool = $ok;
                if let Some(bad) = data.iter().find(|&&x| !ok(x)) {
                    return Err(Error::InvalidArgument(format!(
                        concat!($what, " map contains invalid entry {}"),
                        bad
                    )));
                }
                Ok(Self {
                    width,
                    height,
                    data,
                })
            }

            pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
                Self::new(width, height, vec![value; width * height])
            }

            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> f64,
            ) -> Result<Self> {
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self::new(width, height, data)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            pub fn get(&self, x: usize, y: usize) -> f64 {
                self.data[y * self.width + x]
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }
        }
    };
}

scalar_map!(DepthMap, "depth", |x| x > 0.0 && x.is_finite());
scalar_map!(DisparityMap, "disparity", |x| x >= 0.0 && x.is_finite());

impl DepthMap {
    pub fn from_log_depth(width: usize, height: usize, log_depth: &[f64]) -> Result<Self> {
        Self::new(width, height, log_depth.iter().map(|s| s.exp()).collect())
    }

    pub fn log_depth(&self) -> Vec<f64> {
        self.data.iter().map(|d| d.ln()).collect()
    }

    /// Pixel disparity `B f / depth` for every entry.
    pub fn to_disparity(&self, rig: &crate::geometry::StereoRig) -> DisparityMap {
        let k = rig.disparity_constant();
        DisparityMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|d| k / d).collect(),
        }
    }

    pub fn median(&self) -> f64 {
        median(&self.data)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-pixel sampling location in a source image plus a validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CoordinateMap {
    pub fn identity(width: usize, height: usize) -> Self {
        let n = width * height;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                u.push(x as f64);
                v.push(y as f64);
            }
        }
        Self {
            width,
            height,
            u,
            v,
            valid: vec![true; n],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    fn in_bounds(&self, u: f64, v: f64) -> bool {
        in_bounds(u, v, self.width, self.height)
    }
}

fn in_bounds(u: f64, v: f64, width: usize, height: usize) -> bool {
    u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64
}

/// `dI/du` and `dI/dv` of a sampled image, laid out like the image data.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleJacobian {
    pub channels: usize,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

/// Bilinear stencil at a (clamped) continuous location.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub ax: f64,
    pub ay: f64,
}

impl Stencil {
    /// Out-of-range locations are clamped to the border.
    pub fn new(u: f64, v: f64, width: usize, height: usize) -> Self {
        let (x0, x1, ax) = axis(u, width);
        let (y0, y1, ay) = axis(v, height);
        Self {
            x0,
            y0,
            x1,
            y1,
            ax,
            ay,
        }
    }

    /// Neighbour indices (row-major pixel index) and their weights.
    pub fn taps(&self, width: usize) -> [(usize, f64); 4] {
        let (ax, ay) = (self.ax, self.ay);
        [
            (self.y0 * width + self.x0, (1.0 - ax) * (1.0 - ay)),
            (self.y0 * width + self.x1, ax * (1.0 - ay)),
            (self.y1 * width + self.x0, (1.0 - ax) * ay),
            (self.y1 * width + self.x1, ax * ay),
        ]
    }

    /// Value and `(d/du, d/dv)` of channel `c` of an interleaved buffer.
    pub fn eval(&self, data: &[f64], width: usize, channels: usize, c: usize) -> (f64, f64, f64) {
        let at = |x: usize, y: usize| data[(y * width + x) * channels + c];
        let (i00, i10, i01, i11) = (
            at(self.x0, self.y0),
            at(self.x1, self.y0),
            at(self.x0, self.y1),
            at(self.x1, self.y1),
        );
        let (ax, ay) = (self.ax, self.ay);
        let top = i00 + ax * (i10 - i00);
        let bottom = i01 + ax * (i11 - i01);
        let value = top + ay * (bottom - top);
        let du = (1.0 - ay) * (i10 - i00) + ay * (i11 - i01);
        let dv = bottom - top;
        (value, du, dv)
    }
}

fn axis(t: f64, n: usize) -> (usize, usize, f64) {
    if n < 2 {
        return (0, 0, 0.0);
    }
    let max = (n - 1) as f64;
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, max) };
    let i0 = (t.floor() as usize).min(n - 2);
    (i0, i0 + 1, t - i0 as f64)
}

fn check_coords(width: usize, height: usize, coords: &CoordinateMap) -> Result<()> {
    if coords.width != width || coords.height != height {
        return Err(Error::dims(
            format!("{width}x{height}"),
            format!("{}x{}", coords.width, coords.height),
        ));
    }
    let n = width * height;
    if coords.u.len() != n || coords.v.len() != n || coords.valid.len() != n {
        return Err(Error::dims(
            format!("{n} coordinates"),
            format!("{}/{}/{}", coords.u.len(), coords.v.len(), coords.valid.len()),
        ));
    }
    Ok(())
}

/// Samples `img` at every location of `coords`.
///
/// Invalid or out-of-bounds locations are clamped to the border for their
/// value and get a zero Jacobian; callers exclude them via the mask.
pub fn bilinear_sample(
    img: &ImageBuffer,
    coords: &CoordinateMap,
) -> Result<(ImageBuffer, SampleJacobian)> {
    let s = synthesize(img, coords)?;
    Ok((s.image, s.jacobian))
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub image: ImageBuffer,
    pub mask: Vec<bool>,
    pub jacobian: SampleJacobian,
}

pub fn synthesize(img: &ImageBuffer, coords: &CoordinateMap) -> Result<Synthesized> {
    let (w, h, c) = (img.width, img.height, img.channels);
    check_coords(w, h, coords)?;
    let n = w * h;
    let mut out = vec![0.0; n * c];
    let mut du = vec![0.0; n * c];
    let mut dv = vec![0.0; n * c];
    let mut mask = vec![false; n];
    for i in 0..n {
        let (u, v) = (coords.u[i], coords.v[i]);
        let valid = coords.valid[i] && coords.in_bounds(u, v);
        mask[i] = valid;
        let st = Stencil::new(u, v, w, h);
        for ch in 0..c {
            let (val, gu, gv) = st.eval(&img.data, w, c, ch);
            out[i * c + ch] = val;
            if valid {
                du[i * c + ch] = gu;
                dv[i * c + ch] = gv;
            }
        }
    }
    Ok(Synthesized {
        image: ImageBuffer {
            width: w,
            height: h,
            channels: c,
            data: out,
        },
        mask,
        jacobian: SampleJacobian {
            channels: c,
            du,
            dv,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StereoDirection {
    /// Synthesize the left view: left pixel `(u, v)` reads the right image at `(u - d, v)`.
    LeftFromRight,
    /// Synthesize the right view: right pixel `(u, v)` reads the left image at `(u + d, v)`.
    RightFromLeft,
}

impl StereoDirection {
    /// Sign applied to the disparity when forming the sampling column.
    pub fn shift_sign(self) -> f64 {
        match self {
            StereoDirection::LeftFromRight => -1.0,
            StereoDirection::RightFromLeft => 1.0,
        }
    }
}

pub fn stereo_coordinate_map(disp: &DisparityMap, direction: StereoDirection) -> CoordinateMap {
    stereo_map_raw(disp.width, disp.height, &disp.data, direction)
}

pub(crate) fn stereo_map_raw(
    width: usize,
    height: usize,
    disparity: &[f64],
    direction: StereoDirection,
) -> CoordinateMap {
    let mut map = CoordinateMap::identity(width, height);
    let sign = direction.shift_sign();
    for i in 0..width * height {
        let u = map.u[i] + sign * disparity[i];
        map.u[i] = u;
        map.valid[i] = u.is_finite() && in_bounds(u, map.v[i], width, height);
    }
    map
}

/// Coordinates plus the transformed 3D points they were projected from.
#[derive(Debug, Clone)]
pub(crate) struct TemporalWarp {
    pub coords: CoordinateMap,
    /// Pixel point in the source frame (before the motion).
    pub source_points: Vec<nalgebra::Vector3<f64>>,
    /// The same point after the motion.
    pub points: Vec<nalgebra::Vector3<f64>>,
    /// Unit-depth viewing ray of each source pixel.
    pub rays: Vec<nalgebra::Vector3<f64>>,
}

pub(crate) fn temporal_warp(k: &Intrinsics, depth: &DepthMap, t: &RigidTransform) -> TemporalWarp {
    let (w, h) = (depth.width, depth.height);
    let mut coords = CoordinateMap::identity(w, h);
    let n = w * h;
    let mut source_points = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut rays = Vec::with_capacity(n);
    for i in 0..n {
        let ray = k.ray(coords.u[i], coords.v[i]);
        let p = ray * depth.data[i];
        let q = t.transform_point(&p);
        if q.z > EPSILON_Z {
            let (u, v) = (k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy);
            coords.u[i] = u;
            coords.v[i] = v;
            coords.valid[i] = u.is_finite() && v.is_finite() && in_bounds(u, v, w, h);
        } else {
            coords.valid[i] = false;
        }
        rays.push(ray);
        source_points.push(p);
        points.push(q);
    }
    TemporalWarp {
        coords,
        source_points,
        points,
        rays,
    }
}

/// Where each pixel of frame `k` lands in frame `k+1` under motion `T`.
pub fn temporal_coordinate_map(k: &Intrinsics, depth: &DepthMap, t: &RigidTransform) -> CoordinateMap {
    temporal_warp(k, depth, t).coords
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose6DoF;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_image(w: usize, h: usize, c: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, c, |x, y, ch| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.31 * x + 0.17 * y + ch as f64).sin()
                + 0.15 * (0.11 * x - 0.23 * y).cos()
        })
        .unwrap()
    }

    fn single_coord(w: usize, h: usize, u: f64, v: f64) -> CoordinateMap {
        let mut m = CoordinateMap::identity(w, h);
        m.u[0] = u;
        m.v[0] = v;
        m
    }

    #[test]
    fn exact_at_lattice_points() {
        let img = smooth_image(12, 10, 1);
        let (out, jac) = bilinear_sample(&img, &single_coord(12, 10, 3.0, 7.0)).unwrap();
        assert_eq!(out.get(0, 0, 0), img.get(3, 7, 0));
        assert!((jac.du[0] - (img.get(4, 7, 0) - img.get(3, 7, 0))).abs() < 1e-15);
        assert!((jac.dv[0] - (img.get(3, 8, 0) - img.get(3, 7, 0))).abs() < 1e-15);
    }

    #[test]
    fn midpoint_average() {
        let img = ImageBuffer::new(2, 1, 1, vec![0.2, 0.6]).unwrap();
        let mut m = CoordinateMap::identity(2, 1);
        m.u[0] = 0.5;
        let (out, _) = bilinear_sample(&img, &m).unwrap();
        assert!((out.get(0, 0, 0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let img = smooth_image(40, 30, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-4;
        for _ in 0..1000 {
            let u = rng.gen_range(1.0..38.0);
            let v = rng.gen_range(1.0..28.0);
            let st = Stencil::new(u, v, 40, 30);
            // Keep the +-h probe inside one bilinear cell.
            if st.ax < 2.0 * h || st.ax > 1.0 - 2.0 * h || st.ay < 2.0 * h || st.ay > 1.0 - 2.0 * h {
                continue;
            }
            for c in 0..3 {
                let (_, du, dv) = st.eval(img.data(), 40, 3, c);
                let f = |u: f64, v: f64| Stencil::new(u, v, 40, 30).eval(img.data(), 40, 3, c).0;
                let fd_u = (f(u + h, v) - f(u - h, v)) / (2.0 * h);
                let fd_v = (f(u, v + h) - f(u, v - h)) / (2.0 * h);
                assert!((fd_u - du).abs() < 1e-6);
                assert!((fd_v - dv).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn values_stay_within_neighbour_range() {
        let img = smooth_image(20, 15, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let (u, v) = (rng.gen_range(0.0..19.0), rng.gen_range(0.0..14.0));
            let st = Stencil::new(u, v, 20, 15);
            let (val, _, _) = st.eval(img.data(), 20, 1, 0);
            let n = [
                img.get(st.x0, st.y0, 0),
                img.get(st.x1, st.y0, 0),
                img.get(st.x0, st.y1, 0),
                img.get(st.x1, st.y1, 0),
            ];
            let lo = n.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(val >= lo - 1e-15 && val <= hi + 1e-15);
        }
    }

    #[test]
    fn out_of_bounds_is_masked() {
        let img = smooth_image(8, 8, 1);
        let s = synthesize(&img, &single_coord(8, 8, -0.5, 2.0)).unwrap();
        assert!(!s.mask[0]);
        assert_eq!(s.jacobian.du[0], 0.0);
        assert_eq!(s.image.get(0, 0, 0), img.get(0, 2, 0));
        assert!(s.mask[1..].iter().all(|&b| b));
    }

    #[test]
    fn dimension_mismatch() {
        let img = smooth_image(8, 8, 1);
        let coords = CoordinateMap::identity(8, 7);
        assert!(matches!(
            bilinear_sample(&img, &coords),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stereo_maps() {
        let zero = DisparityMap::constant(8, 4, 0.0).unwrap();
        for dir in [StereoDirection::LeftFromRight, StereoDirection::RightFromLeft] {
            assert_eq!(stereo_coordinate_map(&zero, dir), CoordinateMap::identity(8, 4));
        }
        let two = DisparityMap::constant(8, 4, 2.0).unwrap();
        let l = stereo_coordinate_map(&two, StereoDirection::LeftFromRight);
        let r = stereo_coordinate_map(&two, StereoDirection::RightFromLeft);
        for y in 0..4 {
            for x in 0..8 {
                let i = y * 8 + x;
                assert_eq!(l.u[i], x as f64 - 2.0);
                assert_eq!(r.u[i], x as f64 + 2.0);
                assert_eq!(l.valid[i], x >= 2);
                assert_eq!(r.valid[i], x < 6);
            }
        }
    }

    #[test]
    fn identity_synthesis_is_exact() {
        let img = smooth_image(16, 9, 3);
        let s = synthesize(&img, &CoordinateMap::identity(16, 9)).unwrap();
        assert_eq!(s.image, img);
        assert!(s.mask.iter().all(|&b| b));
    }

    #[test]
    fn horizontal_shift_of_ramp() {
        let ramp = ImageBuffer::from_fn(10, 3, 1, |x, _, _| x as f64 / 10.0).unwrap();
        let mut m = CoordinateMap::identity(10, 3);
        for u in m.u.iter_mut() {
            *u -= 1.0;
        }
        let s = synthesize(&ramp, &m).unwrap();
        for y in 0..3 {
            for x in 1..10 {
                assert!((s.image.get(x, y, 0) - ramp.get(x - 1, y, 0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn temporal_identity_and_planar_shift() {
        let k = Intrinsics::centered(40.0, 32, 16).unwrap();
        let depth = DepthMap::constant(32, 16, 10.0).unwrap();
        let m = temporal_coordinate_map(&k, &depth, &RigidTransform::identity());
        let id = CoordinateMap::identity(32, 16);
        for i in 0..m.u.len() {
            assert!((m.u[i] - id.u[i]).abs() < 1e-12 && (m.v[i] - id.v[i]).abs() < 1e-12);
            assert!(m.valid[i]);
        }
        let t = Pose6DoF::from_translation(0.5, 0.0, 0.0).to_transform();
        let m = temporal_coordinate_map(&k, &depth, &t);
        for y in 0..16 {
            for x in 0..32 {
                let i = y * 32 + x;
                assert!((m.u[i] - (x as f64 + 40.0 * 0.5 / 10.0)).abs() < 1e-12);
                assert!((m.v[i] - y as f64).abs() < 1e-12);
                assert_eq!(m.valid[i], x + 2 <= 31);
            }
        }
    }

    #[test]
    fn temporal_map_matches_scalar_brute_force() {
        let k = Intrinsics::new(41.0, 39.0, 15.3, 8.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let depth = DepthMap::from_fn(32, 16, |_, _| rng.gen_range(4.0..20.0)).unwrap();
            let pose = Pose6DoF::new(
                [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
                [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)],
            );
            let m = temporal_coordinate_map(&k, &depth, &pose.to_transform());
            // scalar expansion of Rz*Ry*Rx
            let (a, b, c) = (pose.rotation.x, pose.rotation.y, pose.rotation.z);
            let (sa, ca, sb, cb, sc, cc) = (a.sin(), a.cos(), b.sin(), b.cos(), c.sin(), c.cos());
            let r = [
                [cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa],
                [sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa],
                [-sb, cb * sa, cb * ca],
            ];
            for y in 0..16 {
                for x in 0..32 {
                    let d = depth.get(x, y);
                    let px = (x as f64 - 15.3) / 41.0 * d;
                    let py = (y as f64 - 8.1) / 39.0 * d;
                    let pz = d;
                    let t = &pose.translation;
                    let qx = r[0][0] * px + r[0][1] * py + r[0][2] * pz + t.x;
                    let qy = r[1][0] * px + r[1][1] * py + r[1][2] * pz + t.y;
                    let qz = r[2][0] * px + r[2][1] * py + r[2][2] * pz + t.z;
                    let u = 41.0 * qx / qz + 15.3;
                    let v = 39.0 * qy / qz + 8.1;
                    let i = y * 32 + x;
                    assert!((m.u[i] - u).abs() < 1e-9 && (m.v[i] - v).abs() < 1e-9);
                    let inside = u >= 0.0 && u <= 31.0 && v >= 0.0 && v <= 15.0;
                    assert_eq!(m.valid[i], inside);
                }
            }
        }
    }

    #[test]
    fn warp_round_trip_on_smooth_image() {
        let k = Intrinsics::centered(40.0, 64, 32).unwrap();
        let depth = DepthMap::constant(64, 32, 10.0).unwrap();
        let img = ImageBuffer::from_fn(64, 32, 1, |x, y, _| {
            0.5 + 0.2 * (0.15 * x as f64).sin() * (0.1 * y as f64).cos()
        })
        .unwrap();
        let t = Pose6DoF::new([0.2, -0.1, -0.3], [0.01, -0.02, 0.015]).to_transform();
        // Forward warp coordinates then pull back with the depth the moved plane has.
        let fwd = temporal_warp(&k, &depth, &t);
        let moved = synthesize(&img, &fwd.coords).unwrap();
        let back_depth = DepthMap::from_fn(64, 32, |x, y| {
            // depth of the plane z = 10 (frame k) seen from frame k+1
            let ray = k.ray(x as f64, y as f64);
            let inv = t.inverse();
            let dir = inv.rotation * ray;
            (10.0 - inv.translation.z) / dir.z
        })
        .unwrap();
        let bwd = temporal_warp(&k, &back_depth, &t.inverse());
        // frame k+1 image as if rendered: sample img at the inverse map
        let frame1 = synthesize(&img, &bwd.coords).unwrap();
        let round = synthesize(&frame1.image, &fwd.coords).unwrap();
        let mut err = 0.0;
        let mut n = 0;
        for i in 0..64 * 32 {
            let back_idx = {
                let (u, v) = (fwd.coords.u[i], fwd.coords.v[i]);
                let (x, y) = (u.round() as i64, v.round() as i64);
                if x < 0 || y < 0 || x > 63 || y > 31 {
                    None
                } else {
                    Some(y as usize * 64 + x as usize)
                }
            };
            let doubly = moved.mask[i] && back_idx.map(|j| frame1.mask[j]).unwrap_or(false);
            if doubly {
                err += (round.image.data()[i] - img.data()[i]).abs();
                n += 1;
            }
        }
        assert!(n > 500);
        assert!(err / n as f64 <= 5e-3, "mean abs {}", err / n as f64);
    }
}
