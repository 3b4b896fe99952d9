use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{orthonormalize, rotation_deviation, RigidTransform, ROTATION_TOLERANCE};

/// Rotations further than this from orthonormal are rejected.
pub const ORTHONORMAL_LIMIT: f64 = 1e-6;

/// One camera-to-world pose per line: 12 numbers, the row-major `[R | t]` 3x4 matrix.
pub fn read_poses(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.into(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_poses(&text, path)
}

/// Blank lines are skipped. `path` only labels errors.
pub fn parse_poses(text: &str, path: &Path) -> Result<Trajectory> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    let mut poses = Vec::new();
    let mut repaired = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(parse_err(line, format!("expected 12 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 12];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("`{f}` is not a number")))?;
            if !slot.is_finite() {
                return Err(parse_err(line, format!("non-finite value `{f}`")));
            }
        }
        let mut rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let translation = Vector3::new(v[3], v[7], v[11]);
        let deviation = rotation_deviation(&rotation);
        if deviation > ORTHONORMAL_LIMIT {
            return Err(Error::MalformedRotation {
                path: path.into(),
                line,
                deviation,
            });
        }
        if deviation > ROTATION_TOLERANCE {
            rotation = orthonormalize(&rotation);
            repaired += 1;
        }
        poses.push(RigidTransform {
            rotation,
            translation,
        });
    }
    if poses.is_empty() {
        return Err(parse_err(0, "no poses".into()));
    }
    if repaired > 0 {
        log::warn!(
            "{}: re-orthonormalized {repaired} of {} rotations",
            path.display(),
            poses.len()
        );
    }
    Trajectory::new(poses)
}

/// 17 significant digits per value.
pub fn format_poses(traj: &Trajectory) -> String {
    let mut out = String::new();
    for p in traj.poses() {
        let (r, t) = (&p.rotation, &p.translation);
        #[rustfmt::skip]
        let row = [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ];
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{x:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_poses(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_poses(traj).as_bytes())
}
