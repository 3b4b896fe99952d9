//! Depth and ego-motion estimation from stereo sequences by direct optimisation
//! of photometric, disparity, pose and 3D registration consistency losses.
//!
//! Everything runs on a CPU in `f64`. The losses come with analytic gradients;
//! [`optimizer`] drives them with Adam, [`synthworld`] renders ground-truth
//! scenes, and [`evaluation`] scores trajectories and depth maps.

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod imagegrid;
pub mod io;
pub mod losses;
pub mod optimizer;
pub mod synthworld;

pub use error::{Error, Result};
pub use geometry::{Intrinsics, Pose6DoF, RigidTransform, StereoRig};
pub use imagegrid::{DepthMap, DisparityMap, ImageBuffer};
