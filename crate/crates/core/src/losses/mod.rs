//! Spatial (stereo) and temporal loss families with analytic gradients.

mod disparity;
mod geometric;
mod photometric;
mod pose;
mod ssim;
mod total;

pub use disparity::{
    disparity_consistency_loss, disparity_consistency_terms, DisparityGradient, DisparityTerms,
};
pub use geometric::{geometric_registration_loss, GeometricGradient};
pub use photometric::photometric_loss;
pub use pose::{pose_consistency_loss, PoseGradient};
pub use ssim::{ssim, SsimMap, C1, C2};
pub use total::{
    sequence_loss, spatial_loss, stereo_photometric, temporal_loss, temporal_photometric,
    total_loss, DepthGradient, LossBreakdown, PosePair, SequenceGradient, SequenceLoss,
    StereoDepths, StereoFrame, TemporalGradient,
};

use crate::error::{Error, Result};

/// A scalar loss and its gradient with respect to the differentiable inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<G> {
    pub value: f64,
    pub grad: G,
}

/// Subgradient of `|x|` with `sign(0) = 0`.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// SSIM share of each photometric loss.
    pub lambda_s: f64,
    /// Left-right position consistency weight.
    pub lambda_p: f64,
    /// Left-right orientation consistency weight.
    pub lambda_o: f64,
    pub w_spatial_photo: f64,
    pub w_disp: f64,
    pub w_pose: f64,
    pub w_temporal_photo: f64,
    pub w_geo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 0.85,
            lambda_p: 1.0,
            lambda_o: 1.0,
            w_spatial_photo: 1.0,
            w_disp: 1.0,
            w_pose: 0.01,
            w_temporal_photo: 1.0,
            w_geo: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_s", self.lambda_s),
            ("lambda_p", self.lambda_p),
            ("lambda_o", self.lambda_o),
            ("w_spatial_photo", self.w_spatial_photo),
            ("w_disp", self.w_disp),
            ("w_pose", self.w_pose),
            ("w_temporal_photo", self.w_temporal_photo),
            ("w_geo", self.w_geo),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidValue {
                    key: name.into(),
                    message: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if self.lambda_s > 1.0 {
            return Err(Error::InvalidValue {
                key: "lambda_s".into(),
                message: format!("must lie in [0, 1], got {}", self.lambda_s),
            });
        }
        Ok(())
    }

    /// Stereo-only weights: photometric and disparity consistency.
    pub fn spatial_only(&self) -> Self {
        Self {
            w_pose: 0.0,
            w_temporal_photo: 0.0,
            w_geo: 0.0,
            ..*self
        }
    }

    /// Temporal-only weights: photometric and 3D registration.
    pub fn temporal_only(&self) -> Self {
        Self {
            w_spatial_photo: 0.0,
            w_disp: 0.0,
            w_pose: 0.0,
            ..*self
        }
    }

    /// All aggregation weights zero except the selected family (index as in [`LossBreakdown::as_array`]).
    pub fn single_family(&self, family: usize) -> Self {
        let mut w = [0.0; 5];
        w[family] = 1.0;
        Self {
            w_spatial_photo: w[0],
            w_disp: w[1],
            w_pose: w[2],
            w_temporal_photo: w[3],
            w_geo: w[4],
            ..*self
        }
    }

    pub fn family_weights(&self) -> [f64; 5] {
        [
            self.w_spatial_photo,
            self.w_disp,
            self.w_pose,
            self.w_temporal_photo,
            self.w_geo,
        ]
    }
}
