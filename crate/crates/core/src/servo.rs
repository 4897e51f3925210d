//! Reduced image-based visual-servoing controller: interaction matrices,
//! stacked least-squares pseudo-inverse, and the control law.
//!
//! The full 2x6 interaction matrix relates a point feature's pixel
//! velocity to the camera twist. The platform is underactuated and flies
//! at fixed altitude, so the controller uses the reduced 2x3 form that
//! keeps only the (v_x, v_y, omega_z) columns, stacks it over the four
//! keypoints, and solves the normal equations for the commanded twist.

use crate::camgeo::{CameraIntrinsics, ImagePoint};
use crate::perception::KeypointSet;
use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type FullRow = SMatrix<f64, 2, 6>;
pub type ReducedRow = SMatrix<f64, 2, 3>;
/// Reduced interaction matrix stacked over the four keypoints.
pub type StackedJacobian = SMatrix<f64, 8, 3>;
pub type PseudoInverse = SMatrix<f64, 3, 8>;
/// Stacked pixel feature error (s - s*), keypoint-major (u, v) pairs.
pub type FeatureError = SVector<f64, 8>;

/// Condition-number bound on L^T L beyond which the stack is treated as
/// singular (for example a collapsed quad with repeated corners).
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServoError {
    #[error("non-positive feature depth (z = {z})")]
    NonPositiveDepth { z: f64 },
    #[error("interaction matrix is ill-conditioned (cond = {cond:.3e})")]
    SingularInteraction { cond: f64 },
}

/// Commanded velocities in dimensionless actuator units (body frame:
/// x forward, y left, yaw rate about world z). The simulator maps units
/// to physical velocities through its k_v and k_w gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { vx: 0.0, vy: 0.0, wz: 0.0 };

    pub fn channels(&self) -> [f64; 3] {
        [self.vx, self.vy, self.wz]
    }

    pub fn from_channels(c: [f64; 3]) -> Self {
        Self { vx: c[0], vy: c[1], wz: c[2] }
    }

    /// Clamp channels to symmetric per-channel bounds (vx, vy, wz).
    pub fn clamped(&self, bounds: [f64; 3]) -> Self {
        Self {
            vx: self.vx.clamp(-bounds[0], bounds[0]),
            vy: self.vy.clamp(-bounds[1], bounds[1]),
            wz: self.wz.clamp(-bounds[2], bounds[2]),
        }
    }

    /// Round each channel to the nearest integer actuator step.
    pub fn quantized(&self) -> Self {
        Self { vx: self.vx.round(), vy: self.vy.round(), wz: self.wz.round() }
    }

    pub fn max_abs(&self) -> f64 {
        self.vx.abs().max(self.vy.abs()).max(self.wz.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.wz == 0.0
    }
}

/// Source of the per-keypoint depth Z used in the interaction matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "z")]
pub enum DepthMode {
    /// Ground-truth depth of the ground-plane point under each keypoint.
    GroundTruth,
    /// Fixed nominal depth Z* for every keypoint.
    Constant(f64),
}

/// Controller configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Control gain (lambda > 0).
    pub lambda: f64,
    pub depth_mode: DepthMode,
    /// Per-channel symmetric clamps on actuator units (vx, vy, wz).
    pub command_clamp: [f64; 3],
    /// Round commands to integer actuator steps after clamping.
    pub quantize: bool,
    /// Simulator gains mapping actuator units to physical velocities;
    /// the controller divides by them to emit unit-valued commands.
    pub k_v: f64,
    pub k_w: f64,
    /// Camera-twist (x right, y down, z forward) to body-command mapping.
    /// Defaults to the gimbal-derived mapping at the configured pitch.
    pub cam_to_body: [[f64; 3]; 3],
}

impl ControlConfig {
    /// Default configuration for a gimbal pitched `pitch` radians down.
    pub fn with_gimbal_pitch(pitch: f64) -> Self {
        Self {
            lambda: 0.5,
            depth_mode: DepthMode::GroundTruth,
            command_clamp: [30.0, 30.0, 15.0],
            quantize: true,
            k_v: 0.04,
            k_w: 0.04,
            cam_to_body: cam_to_body_from_pitch(pitch),
        }
    }

    pub fn cam_to_body_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.cam_to_body[i][j])
    }
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self::with_gimbal_pitch(45f64.to_radians())
    }
}

/// Camera-to-body twist mapping for a camera pitched down by `pitch`:
/// the lateral camera axis maps to negative body-left, the tilted
/// camera-down axis contributes its horizontal component to body-forward,
/// and a commanded rotation about the optical axis is realized by the yaw
/// rate whose optical-axis component matches it.
pub fn cam_to_body_from_pitch(pitch: f64) -> [[f64; 3]; 3] {
    let s = pitch.sin();
    [[0.0, -s, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0 / s]]
}

/// The full 2x6 interaction matrix of a point feature at pixel `p` with
/// depth `z`, relating pixel velocity to the camera twist
/// (v_x, v_y, v_z, w_x, w_y, w_z).
pub fn interaction_row_full(
    p: &ImagePoint,
    z: f64,
    intr: &CameraIntrinsics,
) -> Result<FullRow, ServoError> {
    if z <= 0.0 {
        return Err(ServoError::NonPositiveDepth { z });
    }
    let f = intr.f;
    let u = p.u - intr.u0;
    let v = p.v - intr.v0;
    Ok(FullRow::from_rows(&[
        [-f / z, 0.0, u / z, u * v / f, -(f * f + u * u) / f, v].into(),
        [0.0, -f / z, v / z, (f * f + v * v) / f, -u * v / f, -u].into(),
    ]))
}

/// The reduced 2x3 interaction matrix keeping only the actuated columns
/// (v_x, v_y, w_z) of the full form.
pub fn interaction_row_reduced(
    p: &ImagePoint,
    z: f64,
    intr: &CameraIntrinsics,
) -> Result<ReducedRow, ServoError> {
    if z <= 0.0 {
        return Err(ServoError::NonPositiveDepth { z });
    }
    let f = intr.f;
    let u = p.u - intr.u0;
    let v = p.v - intr.v0;
    Ok(ReducedRow::from_rows(&[
        [-f / z, 0.0, v].into(),
        [0.0, -f / z, -u].into(),
    ]))
}

/// Stack the reduced interaction matrices of the four keypoints in
/// canonical order (fl, fr, br, bl).
pub fn stack_jacobian(
    kps: &KeypointSet,
    depths: &[f64; 4],
    intr: &CameraIntrinsics,
) -> Result<StackedJacobian, ServoError> {
    let mut l = StackedJacobian::zeros();
    for (i, (p, &z)) in kps.points().iter().zip(depths).enumerate() {
        let row = interaction_row_reduced(p, z, intr)?;
        l.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&row);
    }
    Ok(l)
}

/// Least-squares pseudo-inverse `(L^T L)^-1 L^T` via a symmetric 3x3
/// solve, guarded by a condition check on the eigenvalues of L^T L.
pub fn pseudo_inverse(l: &StackedJacobian) -> Result<PseudoInverse, ServoError> {
    let g: Matrix3<f64> = l.transpose() * l;
    let eig = g.symmetric_eigenvalues();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &e in eig.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond < CONDITION_LIMIT) {
        return Err(ServoError::SingularInteraction { cond });
    }
    let chol = g
        .cholesky()
        .ok_or(ServoError::SingularInteraction { cond })?;
    Ok(chol.solve(&l.transpose()))
}

/// Controller output for one frame. When the interaction matrix is
/// singular the commands are forced to zero and the frame is flagged.
#[derive(Debug, Clone, Copy)]
pub struct ServoOutput {
    /// Clamped command before quantization; the distillation target.
    pub raw: VelocityCommand,
    /// The command actually issued (quantized when configured).
    pub command: VelocityCommand,
    pub error: FeatureError,
    pub singular: bool,
}

/// The control law: camera twist `-lambda * L^+ (s - s*)`, mapped into
/// body actuator units, clamped, and optionally quantized.
pub fn control_law(
    current: &KeypointSet,
    desired: &KeypointSet,
    depths: &[f64; 4],
    intr: &CameraIntrinsics,
    cfg: &ControlConfig,
) -> Result<ServoOutput, ServoError> {
    let e = FeatureError::from_row_slice(&current.flat()) - FeatureError::from_row_slice(&desired.flat());
    let l = stack_jacobian(current, depths, intr)?;
    let twist_cam = match pseudo_inverse(&l) {
        Ok(pinv) => -cfg.lambda * (pinv * e),
        Err(ServoError::SingularInteraction { .. }) => {
            return Ok(ServoOutput {
                raw: VelocityCommand::ZERO,
                command: VelocityCommand::ZERO,
                error: e,
                singular: true,
            });
        }
        Err(other) => return Err(other),
    };
    let body = cfg.cam_to_body_matrix() * twist_cam;
    let units = VelocityCommand {
        vx: body[0] / cfg.k_v,
        vy: body[1] / cfg.k_v,
        wz: body[2] / cfg.k_w,
    };
    let raw = units.clamped(cfg.command_clamp);
    let command = if cfg.quantize { raw.quantized() } else { raw };
    Ok(ServoOutput { raw, command, error: e, singular: false })
}
