//! Structured-text (TOML) configuration for the scene, camera,
//! controller, simulator, and training recipe, with documented defaults.

use crate::camgeo::{CameraIntrinsics, CarModel, GimbalConfig};
use crate::servo::{cam_to_body_from_pitch, ControlConfig, DepthMode};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view in degrees; ignored when `f_px` is set.
    pub fov_deg: f64,
    /// Explicit focal length in pixels, overriding `fov_deg`.
    pub f_px: Option<f64>,
    pub gimbal_pitch_deg: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self { width: 640, height: 360, fov_deg: 69.0, f_px: None, gimbal_pitch_deg: 45.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    /// Flight altitude, meters.
    pub altitude: f64,
    pub car_length: f64,
    pub car_width: f64,
    /// Goal pose distance behind the car, meters.
    pub goal_distance: f64,
    /// Nominal start distances from the car by pose family, meters.
    pub frontal_distance: f64,
    pub diagonal_distance: f64,
    pub lateral_distance: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            altitude: 1.8,
            car_length: 0.4,
            car_width: 0.2,
            goal_distance: 1.8,
            frontal_distance: 3.0,
            diagonal_distance: 2.5,
            lateral_distance: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub lambda: f64,
    /// "ground_truth" or "constant".
    pub depth_mode: String,
    /// Nominal depth Z* for constant mode, meters.
    pub constant_depth: f64,
    /// Per-channel symmetric command clamps (vx, vy, wz actuator units).
    pub command_clamp: [f64; 3],
    pub quantize: bool,
    /// Meters per second per actuator unit.
    pub k_v: f64,
    /// Radians per second per actuator unit.
    pub k_w: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            depth_mode: "ground_truth".into(),
            constant_depth: 2.4,
            command_clamp: [30.0, 30.0, 15.0],
            quantize: true,
            k_v: 0.04,
            k_w: 0.04,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Control period, seconds.
    pub dt: f64,
    /// Hard timeout, seconds.
    pub max_duration: f64,
    /// Uniform start-pose jitter: position bound (meters), yaw bound (deg).
    pub jitter_pos: f64,
    pub jitter_yaw_deg: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { dt: 0.1, max_duration: 75.0, jitter_pos: 0.3, jitter_yaw_deg: 5.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub patience: u32,
    pub min_delta: f64,
    /// Samples emitted per original frame each epoch (augmented + original).
    pub augment_factor: u32,
    pub max_epochs: u32,
    /// Validation episodes as a fraction of the dataset, split by episode.
    pub val_fraction: f64,
    /// Square input resolution of the student network.
    pub input_size: u32,
    /// Label-normalization bounds: "calibrated" (from the teacher logs),
    /// "sim", or "real" (the published evaluation-run ranges).
    pub bounds: String,
    /// Quantile of the command distribution covered by calibrated bounds.
    pub bounds_quantile: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 32,
            patience: 3,
            min_delta: 1e-4,
            augment_factor: 5,
            max_epochs: 30,
            val_fraction: 0.1,
            input_size: 64,
            bounds: "calibrated".into(),
            bounds_quantile: 0.98,
        }
    }
}

/// The full configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub camera: CameraSection,
    pub scene: SceneSection,
    pub control: ControlSection,
    pub sim: SimSection,
    pub train: TrainSection,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: AppConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.camera.width == 0 || self.camera.height == 0 {
            return bad("image size must be positive");
        }
        if self.camera.fov_deg <= 0.0 || self.camera.fov_deg >= 180.0 {
            return bad("fov_deg must be in (0, 180)");
        }
        if let Some(f) = self.camera.f_px {
            if f <= 0.0 {
                return bad("f_px must be positive");
            }
        }
        if self.camera.gimbal_pitch_deg <= 0.0 || self.camera.gimbal_pitch_deg > 90.0 {
            return bad("gimbal_pitch_deg must be in (0, 90]");
        }
        if self.scene.altitude <= 0.0 {
            return bad("altitude must be positive");
        }
        if self.scene.car_length <= self.scene.car_width || self.scene.car_width <= 0.0 {
            return bad("car must satisfy length > width > 0");
        }
        if self.control.lambda <= 0.0 {
            return bad("lambda must be positive");
        }
        if self.control.depth_mode != "ground_truth" && self.control.depth_mode != "constant" {
            return bad("depth_mode must be ground_truth or constant");
        }
        if self.control.constant_depth <= 0.0 {
            return bad("constant_depth must be positive");
        }
        if self.sim.dt <= 0.0 || self.sim.max_duration <= 0.0 {
            return bad("dt and max_duration must be positive");
        }
        if self.train.lr <= 0.0 || self.train.patience == 0 {
            return bad("lr must be positive and patience >= 1");
        }
        if self.train.augment_factor == 0 || self.train.input_size == 0 {
            return bad("augment_factor and input_size must be positive");
        }
        if !["calibrated", "sim", "real"].contains(&self.train.bounds.as_str()) {
            return bad("train.bounds must be calibrated, sim, or real");
        }
        if !(0.5..=1.0).contains(&self.train.bounds_quantile) {
            return bad("bounds_quantile must be in [0.5, 1]");
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        match self.camera.f_px {
            Some(f) => CameraIntrinsics {
                f,
                u0: self.camera.width as f64 / 2.0,
                v0: self.camera.height as f64 / 2.0,
                width: self.camera.width,
                height: self.camera.height,
            },
            None => CameraIntrinsics::from_hfov(
                self.camera.width,
                self.camera.height,
                self.camera.fov_deg,
            ),
        }
    }

    pub fn gimbal(&self) -> GimbalConfig {
        GimbalConfig { pitch: self.camera.gimbal_pitch_deg.to_radians() }
    }

    pub fn car(&self) -> CarModel {
        CarModel { length: self.scene.car_length, width: self.scene.car_width }
    }

    pub fn control_config(&self) -> ControlConfig {
        let depth_mode = if self.control.depth_mode == "constant" {
            DepthMode::Constant(self.control.constant_depth)
        } else {
            DepthMode::GroundTruth
        };
        ControlConfig {
            lambda: self.control.lambda,
            depth_mode,
            command_clamp: self.control.command_clamp,
            quantize: self.control.quantize,
            k_v: self.control.k_v,
            k_w: self.control.k_w,
            cam_to_body: cam_to_body_from_pitch(self.camera.gimbal_pitch_deg.to_radians()),
        }
    }
}
