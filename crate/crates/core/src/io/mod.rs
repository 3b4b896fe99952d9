//! File formats: KITTI-style pose files, binary PGM/PPM images, PFM depth maps
//! and `key = value` run configuration.

mod config;
mod netpbm;
mod poses;

pub use config::{Config, InitMode, SceneName};
pub use netpbm::{
    decode_pfm, decode_pnm, encode_pfm, encode_pnm, read_depth, read_image, read_pfm, write_depth,
    write_image, write_pfm,
};
pub use poses::{format_poses, parse_poses, read_poses, write_poses, ORTHONORMAL_LIMIT};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
