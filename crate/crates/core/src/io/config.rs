use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::read_bytes;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose6DoF, StereoRig};
use crate::losses::LossWeights;
use crate::optimizer::Schedule;
use crate::synthworld::{SceneKind, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneName {
    FrontoParallel,
    Stairs,
    Slanted,
}

impl SceneName {
    fn as_str(self) -> &'static str {
        match self {
            Self::FrontoParallel => "fronto",
            Self::Stairs => "stairs",
            Self::Slanted => "slanted",
        }
    }
}

/// How `optimize` initialises depths and poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Constant depth `init_depth`, identity poses.
    Flat,
    /// Ground-truth depths and poses.
    GroundTruth,
    /// Ground truth with depths scaled by `init_depth_scale` and `init_pose_offset` added to every `tz`.
    Perturbed,
}

impl InitMode {
    fn as_str(self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::GroundTruth => "ground_truth",
            Self::Perturbed => "perturbed",
        }
    }
}

/// Run configuration. Text form is one `key = value` per line, `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; `None` means `0.625 * width`.
    pub focal: Option<f64>,
    pub baseline: f64,
    pub seed: u64,
    pub scene: SceneName,
    pub depth: f64,
    pub near: f64,
    pub far: f64,
    pub angle: f64,
    pub frames: usize,
    /// Constant frame-to-frame motion `T_{k,k+1}`.
    pub motion: Pose6DoF,
    pub init: InitMode,
    pub init_depth: f64,
    pub init_depth_scale: f64,
    pub init_pose_offset: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            schedule: Schedule::default(),
            width: 64,
            height: 32,
            focal: None,
            baseline: 0.5,
            seed: 0,
            scene: SceneName::FrontoParallel,
            depth: 10.0,
            near: 6.0,
            far: 12.0,
            angle: 0.3,
            frames: 3,
            motion: Pose6DoF::from_translation(0.0, 0.0, -0.1),
            init: InitMode::Flat,
            init_depth: 15.0,
            init_depth_scale: 1.2,
            init_pose_offset: 0.05,
        }
    }
}

pub const KEYS: [&str; 29] = [
    "lambda_s",
    "lambda_p",
    "lambda_o",
    "w_spatial_photo",
    "w_disp",
    "w_pose",
    "w_temporal_photo",
    "w_geo",
    "learning_rate",
    "iterations",
    "pose_lr_scale",
    "rotation_weight",
    "width",
    "height",
    "focal",
    "baseline",
    "seed",
    "scene",
    "depth",
    "near",
    "far",
    "angle",
    "frames",
    "motion",
    "init",
    "init_depth",
    "init_depth_scale",
    "init_pose_offset",
    "format_version",
];

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::InvalidValue {
        key: key.into(),
        message: message.into(),
    }
}

fn float(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| invalid(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(invalid(key, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x = float(key, v)?;
    if x <= 0.0 {
        return Err(invalid(key, format!("must be positive, got {x}")));
    }
    Ok(x)
}

fn integer<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| invalid(key, format!("`{v}` is not a non-negative integer")))
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = String::from_utf8(read_bytes(path)?).map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            message: format!("not UTF-8: {e}"),
        })?;
        Self::parse(&text, path)
    }

    /// Keys may appear in any order, at most once each. Missing keys keep their defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    message: format!("expected `key = value`, found `{body}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::UnknownKey(key.into()));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::DuplicateKey(key.into()));
            }
            if value.is_empty() {
                return Err(invalid(key, "empty value"));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let w = &mut self.weights;
        match key {
            "lambda_s" => w.lambda_s = float(key, v)?,
            "lambda_p" => w.lambda_p = float(key, v)?,
            "lambda_o" => w.lambda_o = float(key, v)?,
            "w_spatial_photo" => w.w_spatial_photo = float(key, v)?,
            "w_disp" => w.w_disp = float(key, v)?,
            "w_pose" => w.w_pose = float(key, v)?,
            "w_temporal_photo" => w.w_temporal_photo = float(key, v)?,
            "w_geo" => w.w_geo = float(key, v)?,
            "learning_rate" => self.schedule.initial_lr = float(key, v)?,
            "iterations" => self.schedule.total_iterations = integer(key, v)?,
            "pose_lr_scale" => self.schedule.pose_lr_scale = float(key, v)?,
            "rotation_weight" => self.schedule.rotation_weight = float(key, v)?,
            "width" => self.width = integer(key, v)?,
            "height" => self.height = integer(key, v)?,
            "focal" => self.focal = Some(positive(key, v)?),
            "baseline" => self.baseline = positive(key, v)?,
            "seed" => self.seed = integer(key, v)?,
            "scene" => {
                self.scene = match v {
                    "fronto" => SceneName::FrontoParallel,
                    "stairs" => SceneName::Stairs,
                    "slanted" => SceneName::Slanted,
                    _ => return Err(invalid(key, format!("`{v}` is not fronto, stairs or slanted"))),
                }
            }
            "depth" => self.depth = positive(key, v)?,
            "near" => self.near = positive(key, v)?,
            "far" => self.far = positive(key, v)?,
            "angle" => self.angle = float(key, v)?,
            "frames" => self.frames = integer(key, v)?,
            "motion" => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 6 {
                    return Err(invalid(
                        key,
                        format!("expected 6 numbers (tx ty tz roll pitch yaw), found {}", parts.len()),
                    ));
                }
                let mut p = [0.0; 6];
                for (slot, s) in p.iter_mut().zip(&parts) {
                    *slot = float(key, s)?;
                }
                self.motion = Pose6DoF::from_array(p);
            }
            "init" => {
                self.init = match v {
                    "flat" => InitMode::Flat,
                    "ground_truth" => InitMode::GroundTruth,
                    "perturbed" => InitMode::Perturbed,
                    _ => {
                        return Err(invalid(
                            key,
                            format!("`{v}` is not flat, ground_truth or perturbed"),
                        ))
                    }
                }
            }
            "init_depth" => self.init_depth = positive(key, v)?,
            "init_depth_scale" => self.init_depth_scale = positive(key, v)?,
            "init_pose_offset" => self.init_pose_offset = float(key, v)?,
            "format_version" => {
                if v != "1" {
                    return Err(invalid(key, format!("unsupported version `{v}`")));
                }
            }
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.schedule.validate()?;
        if self.schedule.total_iterations == 0 {
            return Err(invalid("iterations", "must be at least 1"));
        }
        if self.frames == 0 {
            return Err(invalid("frames", "must be at least 1"));
        }
        self.scene_spec()?;
        Ok(())
    }

    pub fn scene_kind(&self) -> SceneKind {
        match self.scene {
            SceneName::FrontoParallel => SceneKind::FrontoParallel { depth: self.depth },
            SceneName::Stairs => SceneKind::Stairs {
                near: self.near,
                far: self.far,
            },
            SceneName::Slanted => SceneKind::Slanted {
                depth: self.depth,
                angle: self.angle,
            },
        }
    }

    pub fn rig(&self) -> Result<StereoRig> {
        let focal = self.focal.unwrap_or(0.625 * self.width as f64);
        let k = Intrinsics::centered(focal, self.width, self.height)
            .map_err(|e| invalid("focal", e.to_string()))?;
        StereoRig::new(k, self.baseline).map_err(|e| invalid("baseline", e.to_string()))
    }

    pub fn scene_spec(&self) -> Result<SceneSpec> {
        SceneSpec::with_rig(self.scene_kind(), self.seed, self.width, self.height, self.rig()?)
    }

    /// `frames - 1` copies of [`Config::motion`].
    pub fn motions(&self) -> Vec<Pose6DoF> {
        vec![self.motion; self.frames.saturating_sub(1)]
    }

    /// Every key in a fixed order; `focal` only when set. Parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            if k == "focal" && self.focal.is_none() {
                continue;
            }
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// Resolved `(key, value)` pairs; `focal` is always explicit.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let w = &self.weights;
        let s = &self.schedule;
        let m = self.motion.to_array();
        let focal = self.focal.unwrap_or(0.625 * self.width as f64);
        vec![
            ("format_version", "1".into()),
            ("lambda_s", w.lambda_s.to_string()),
            ("lambda_p", w.lambda_p.to_string()),
            ("lambda_o", w.lambda_o.to_string()),
            ("w_spatial_photo", w.w_spatial_photo.to_string()),
            ("w_disp", w.w_disp.to_string()),
            ("w_pose", w.w_pose.to_string()),
            ("w_temporal_photo", w.w_temporal_photo.to_string()),
            ("w_geo", w.w_geo.to_string()),
            ("learning_rate", s.initial_lr.to_string()),
            ("iterations", s.total_iterations.to_string()),
            ("pose_lr_scale", s.pose_lr_scale.to_string()),
            ("rotation_weight", s.rotation_weight.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("focal", focal.to_string()),
            ("baseline", self.baseline.to_string()),
            ("seed", self.seed.to_string()),
            ("scene", self.scene.as_str().into()),
            ("depth", self.depth.to_string()),
            ("near", self.near.to_string()),
            ("far", self.far.to_string()),
            ("angle", self.angle.to_string()),
            ("frames", self.frames.to_string()),
            (
                "motion",
                m.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
            ),
            ("init", self.init.as_str().into()),
            ("init_depth", self.init_depth.to_string()),
            ("init_depth_scale", self.init_depth_scale.to_string()),
            ("init_pose_offset", self.init_pose_offset.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::parse(text, Path::new("run.cfg"))
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(parse("# nothing\n\n").unwrap(), Config::default());
    }

    #[test]
    fn order_independent() {
        let a = parse("w_geo = 0.5\nseed = 7\nscene = stairs # comment\n").unwrap();
        let b = parse("scene=stairs\n  seed =7\nw_geo= 0.5").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, 7);
        assert_eq!(a.weights.w_geo, 0.5);
        assert_eq!(a.scene, SceneName::Stairs);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        match parse("seed = 1\nbogus_key = 3\n") {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "bogus_key"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("seed = 1\nseed = 2"), Err(Error::DuplicateKey(k)) if k == "seed"));
    }

    #[test]
    fn values_are_validated() {
        for bad in [
            "w_disp = -1",
            "learning_rate = 0",
            "iterations = -3",
            "baseline = nan",
            "width = 8",
            "scene = cube",
            "motion = 1 2 3",
            "near = 20\nfar = 10\nscene = stairs",
            "frames = 0",
            "init = random",
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
        assert!(matches!(parse("seed"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn text_round_trip() {
        let cfg = parse("motion = 0.01 0 -0.2 0 0.0174 0\nlearning_rate = 3e-3\nfocal = 41.5\ninit = perturbed")
            .unwrap();
        assert_eq!(parse(&cfg.to_text()).unwrap(), cfg);
        let d = Config::default();
        assert_eq!(parse(&d.to_text()).unwrap(), d);
    }
}
