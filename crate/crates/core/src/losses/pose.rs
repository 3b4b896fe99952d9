use crate::geometry::Pose6DoF;

use super::{sign, LossValue};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGradient {
    pub left: [f64; 6],
    pub right: [f64; 6],
}

/// `lambda_p * |x_l - x_r|_1 + lambda_o * |phi_l - phi_r|_1` on the Euler parameters.
pub fn pose_consistency_loss(
    left: &Pose6DoF,
    right: &Pose6DoF,
    lambda_p: f64,
    lambda_o: f64,
) -> LossValue<PoseGradient> {
    let (l, r) = (left.to_array(), right.to_array());
    let mut value = 0.0;
    let mut gl = [0.0; 6];
    let mut gr = [0.0; 6];
    for k in 0..6 {
        let weight = if k < 3 { lambda_p } else { lambda_o };
        let d = l[k] - r[k];
        value += weight * d.abs();
        gl[k] = weight * sign(d);
        gr[k] = -gl[k];
    }
    LossValue {
        value,
        grad: PoseGradient {
            left: gl,
            right: gr,
        },
    }
}
