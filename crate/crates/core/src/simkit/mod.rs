//! Fixed-altitude kinematic quadrotor simulator, episode runner with the
//! mission termination rules, and the eight-pose evaluation campaign.

mod campaign;
mod episode;
mod logio;
mod termination;

pub use campaign::{run_campaign, CampaignReport, PoseSummary, RunRecord};
pub use episode::{
    capture_reference, run_episode, run_episode_from, ControllerKind, EpisodeLog, FrameRecord,
    Outcome, StudentPilot,
};
pub(crate) use episode::perceive as episode_perceive;
pub use logio::{
    episode_csv, episode_summary_json, read_episode_csv, read_episodes_dir, report_csv,
    write_episode,
};
pub use termination::{check_termination, RuleKind, TerminationRules};

use crate::camgeo::{normalize_angle, CameraIntrinsics, CarModel, GimbalConfig, Pose};
use crate::config::AppConfig;
use crate::servo::VelocityCommand;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// Simulator stepping parameters and unit gains.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// Control period, seconds.
    pub dt: f64,
    /// Meters per second per actuator unit.
    pub k_v: f64,
    /// Radians per second per actuator unit.
    pub k_w: f64,
    /// Flight altitude, meters.
    pub altitude: f64,
    /// Hard timeout, seconds.
    pub max_duration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.1, k_v: 0.04, k_w: 0.04, altitude: 1.8, max_duration: 75.0 }
    }
}

/// One forward-Euler step of the planar kinematics: body-frame velocities
/// rotate by yaw into the world frame; altitude never changes.
pub fn step(pose: &Pose, cmd: &VelocityCommand, cfg: &SimConfig) -> Pose {
    let (s, c) = pose.yaw.sin_cos();
    let vx = cfg.k_v * cmd.vx;
    let vy = cfg.k_v * cmd.vy;
    Pose {
        x: pose.x + (vx * c - vy * s) * cfg.dt,
        y: pose.y + (vx * s + vy * c) * cfg.dt,
        z: pose.z,
        yaw: normalize_angle(pose.yaw + cfg.k_w * cmd.wz * cfg.dt),
    }
}

/// The eight start poses around the target. Bearings are measured from
/// the car's forward axis, positive toward the car's left; "down" poses
/// sit behind the car, near the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPose {
    UpLeft,
    UpRight,
    FrontLeft,
    FrontRight,
    Left,
    Right,
    DownLeft,
    DownRight,
}

impl StartPose {
    pub const ALL: [StartPose; 8] = [
        StartPose::UpLeft,
        StartPose::UpRight,
        StartPose::FrontLeft,
        StartPose::FrontRight,
        StartPose::Left,
        StartPose::Right,
        StartPose::DownLeft,
        StartPose::DownRight,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            StartPose::UpLeft => "up-left",
            StartPose::UpRight => "up-right",
            StartPose::FrontLeft => "front-left",
            StartPose::FrontRight => "front-right",
            StartPose::Left => "left",
            StartPose::Right => "right",
            StartPose::DownLeft => "down-left",
            StartPose::DownRight => "down-right",
        }
    }

    pub fn parse(s: &str) -> Option<StartPose> {
        StartPose::ALL.iter().copied().find(|p| p.label() == s)
    }

    /// Bearing from the car's forward axis, degrees. Diagonal poses sit at
    /// +/-45 and +/-135, frontal poses at +/-14, lateral at +/-90.
    pub fn bearing_deg(&self) -> f64 {
        match self {
            StartPose::FrontLeft => 14.0,
            StartPose::FrontRight => -14.0,
            StartPose::UpLeft => 45.0,
            StartPose::UpRight => -45.0,
            StartPose::Left => 90.0,
            StartPose::Right => -90.0,
            StartPose::DownLeft => 135.0,
            StartPose::DownRight => -135.0,
        }
    }
}

/// Start-pose sampling spec: a labeled nominal pose plus uniform jitter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StartPoseSpec {
    pub label: StartPose,
    /// Uniform position jitter bound, meters.
    pub jitter_pos: f64,
    /// Uniform yaw jitter bound, radians.
    pub jitter_yaw: f64,
}

/// The static world: camera, car, and pose geometry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scene {
    pub car: CarModel,
    pub car_pose: Pose,
    pub intr: CameraIntrinsics,
    pub gimbal: GimbalConfig,
    pub altitude: f64,
    pub goal_distance: f64,
    pub frontal_distance: f64,
    pub diagonal_distance: f64,
    pub lateral_distance: f64,
}

impl Scene {
    pub fn from_config(cfg: &AppConfig) -> Self {
        Self {
            car: cfg.car(),
            car_pose: Pose::new(0.0, 0.0, 0.0, 0.0),
            intr: cfg.intrinsics(),
            gimbal: cfg.gimbal(),
            altitude: cfg.scene.altitude,
            goal_distance: cfg.scene.goal_distance,
            frontal_distance: cfg.scene.frontal_distance,
            diagonal_distance: cfg.scene.diagonal_distance,
            lateral_distance: cfg.scene.lateral_distance,
        }
    }

    fn pose_at_bearing(&self, bearing_deg: f64, distance: f64) -> Pose {
        let ang = self.car_pose.yaw + bearing_deg.to_radians();
        let x = self.car_pose.x + distance * ang.cos();
        let y = self.car_pose.y + distance * ang.sin();
        // Face the car.
        let yaw = (self.car_pose.y - y).atan2(self.car_pose.x - x);
        Pose::new(x, y, self.altitude, yaw)
    }

    /// Goal pose: exactly behind the car, facing it.
    pub fn goal_pose(&self) -> Pose {
        self.pose_at_bearing(180.0, self.goal_distance)
    }

    pub fn nominal_start(&self, label: StartPose) -> Pose {
        let d = match label {
            StartPose::FrontLeft | StartPose::FrontRight => self.frontal_distance,
            StartPose::Left | StartPose::Right => self.lateral_distance,
            _ => self.diagonal_distance,
        };
        self.pose_at_bearing(label.bearing_deg(), d)
    }

    /// Jittered start pose, deterministic in the rng state.
    pub fn sample_start(&self, spec: &StartPoseSpec, rng: &mut impl rand::RngExt) -> Pose {
        let nominal = self.nominal_start(spec.label);
        Pose::new(
            nominal.x + rng.random_range(-spec.jitter_pos..=spec.jitter_pos),
            nominal.y + rng.random_range(-spec.jitter_pos..=spec.jitter_pos),
            nominal.z,
            nominal.yaw + rng.random_range(-spec.jitter_yaw..=spec.jitter_yaw),
        )
    }
}

/// SplitMix64: cheap deterministic derivation of per-episode seeds.
pub(crate) fn derive_seed(campaign_seed: u64, pose_idx: u64, run_idx: u64) -> u64 {
    let mut z = campaign_seed
        .wrapping_add(pose_idx.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(run_idx.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
