//! Closed-loop episode runner: render, perceive, control, step, check
//! termination. Owns the previous-frame keypoint-label fallback state.

use crate::camgeo::{camera_from_pose, ground_depth, CameraExtrinsics, Pose};
use crate::perception::{
    centroid, min_area_obb, order_keypoints, project_front_hint, rasterize_car, split_mask,
    KeypointSet, PerceptionError, RasterOutput,
};
use crate::servo::{control_law, ControlConfig, DepthMode, VelocityCommand};
use crate::simkit::{
    check_termination, RuleKind, Scene, SimConfig, StartPoseSpec, TerminationRules,
};
use crate::student::{denormalize, render_input, InferenceNet, NormalizationBounds};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-frame record of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u32,
    pub t: f64,
    pub pose: Pose,
    pub kps: KeypointSet,
    /// L2 norm of the stacked pixel error against the reference features.
    pub err_norm: f64,
    /// Clamped pre-quantization command.
    pub raw: VelocityCommand,
    /// Issued (quantized) command.
    pub cmd: VelocityCommand,
    pub singular: bool,
    /// Keypoint labels taken from the previous frame after an ambiguous
    /// front/back corner split.
    pub used_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Hard error rule: median error at most 40 px for three seconds.
    ConvergedHard,
    /// Soft rule: median error at most 80 px with zero commands.
    ConvergedSoft,
    /// Student rule: all command channels within one unit.
    ConvergedQuiet,
    Timeout,
    LostTarget,
    Error(String),
}

impl Outcome {
    pub fn converged(&self) -> bool {
        matches!(self, Outcome::ConvergedHard | Outcome::ConvergedSoft | Outcome::ConvergedQuiet)
    }

    pub fn label(&self) -> String {
        match self {
            Outcome::ConvergedHard => "converged_hard".into(),
            Outcome::ConvergedSoft => "converged_soft".into(),
            Outcome::ConvergedQuiet => "converged_quiet".into(),
            Outcome::Timeout => "timeout".into(),
            Outcome::LostTarget => "lost_target".into(),
            Outcome::Error(e) => format!("error:{e}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub start_label: String,
    pub seed: u64,
    pub start_pose: Pose,
    /// Reference features captured from the goal pose.
    pub desired: KeypointSet,
    pub frames: Vec<FrameRecord>,
    pub outcome: Outcome,
    pub rule: Option<RuleKind>,
}

/// The student flight stack: deployment network plus command post-processing.
pub struct StudentPilot {
    pub net: InferenceNet,
    pub bounds: NormalizationBounds,
    pub command_clamp: [f64; 3],
    pub quantize: bool,
    pub input_size: u32,
}

impl StudentPilot {
    fn command(&mut self, raster: &RasterOutput) -> Result<(VelocityCommand, VelocityCommand), PerceptionError> {
        let tensor = render_input(raster, self.input_size)
            .map_err(|_| PerceptionError::TargetNotVisible)?;
        let y = self.net.forward(&tensor).map_err(|_| PerceptionError::TargetNotVisible)?;
        let raw = denormalize(&y, &self.bounds).clamped(self.command_clamp);
        let cmd = if self.quantize { raw.quantized() } else { raw };
        Ok((raw, cmd))
    }
}

pub enum ControllerKind {
    Teacher(ControlConfig),
    Student(StudentPilot),
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Teacher(_) => "teacher",
            ControllerKind::Student(_) => "student",
        }
    }

    pub fn rules(&self, sim: &SimConfig) -> TerminationRules {
        match self {
            ControllerKind::Teacher(_) => TerminationRules::teacher(sim.max_duration),
            ControllerKind::Student(_) => TerminationRules::student(sim.max_duration),
        }
    }
}

/// Run the stabilization pipeline on one rendered frame. On an ambiguous
/// corner assignment, labels are recovered from the previous frame by
/// nearest-corner matching.
pub(crate) fn perceive(
    scene: &Scene,
    extr: &CameraExtrinsics,
    raster: &RasterOutput,
    prev: Option<&KeypointSet>,
) -> Result<(KeypointSet, bool), PerceptionError> {
    let c = centroid(&raster.mask)?;
    let hint = project_front_hint(&scene.car, &scene.car_pose, extr, &scene.intr)?;
    let obb = min_area_obb(&raster.mask)?;
    let ordered = match split_mask(&raster.mask, &c, &hint) {
        Ok(split) => order_keypoints(&obb, &split),
        Err(PerceptionError::DegenerateHint) => Err(PerceptionError::AmbiguousAssignment),
        Err(e) => Err(e),
    };
    match ordered {
        Ok(k) => Ok((k, false)),
        Err(PerceptionError::AmbiguousAssignment) => match prev {
            Some(p) => Ok((relabel_from_previous(&obb.0, p), true)),
            None => Err(PerceptionError::AmbiguousAssignment),
        },
        Err(e) => Err(e),
    }
}

/// Assign the four corners to the labels of the previous frame's
/// keypoints, minimizing total squared distance over all permutations.
fn relabel_from_previous(
    corners: &[crate::camgeo::ImagePoint; 4],
    prev: &KeypointSet,
) -> KeypointSet {
    const PERMS: [[usize; 4]; 24] = [
        [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
        [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
        [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
        [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
    ];
    let prev_pts = prev.points();
    let mut best = PERMS[0];
    let mut best_cost = f64::INFINITY;
    for perm in PERMS {
        let mut cost = 0.0;
        for (label, &ci) in perm.iter().enumerate() {
            let d = corners[ci].dist(&prev_pts[label]);
            cost += d * d;
        }
        if cost < best_cost {
            best_cost = cost;
            best = perm;
        }
    }
    KeypointSet {
        fl: corners[best[0]],
        fr: corners[best[1]],
        br: corners[best[2]],
        bl: corners[best[3]],
    }
}

/// Reference features: the full perception pipeline run from the goal pose.
pub fn capture_reference(goal_pose: &Pose, scene: &Scene) -> Result<KeypointSet, PerceptionError> {
    let extr = camera_from_pose(goal_pose, &scene.gimbal);
    let raster = rasterize_car(&scene.car, &scene.car_pose, &extr, &scene.intr)?;
    let (kps, _) = perceive(scene, &extr, &raster, None)?;
    Ok(kps)
}

fn keypoint_depths(
    kps: &KeypointSet,
    extr: &CameraExtrinsics,
    scene: &Scene,
    mode: &DepthMode,
) -> Option<[f64; 4]> {
    match mode {
        DepthMode::Constant(z) => Some([*z; 4]),
        DepthMode::GroundTruth => {
            let mut out = [0.0; 4];
            for (i, p) in kps.points().iter().enumerate() {
                out[i] = ground_depth(p, extr, &scene.intr).ok()?;
            }
            Some(out)
        }
    }
}

fn err_norm(kps: &KeypointSet, desired: &KeypointSet) -> f64 {
    kps.flat()
        .iter()
        .zip(desired.flat())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Run one closed-loop episode from a sampled (jittered) start pose.
/// Deterministic in (scene, spec, config, seed); controller failures
/// become outcome records rather than errors.
pub fn run_episode(
    scene: &Scene,
    spec: &StartPoseSpec,
    controller: &mut ControllerKind,
    sim: &SimConfig,
    seed: u64,
) -> EpisodeLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start_pose = scene.sample_start(spec, &mut rng);
    run_episode_from(scene, start_pose, spec.label.label(), controller, sim, seed)
}

/// Run one closed-loop episode from an explicit start pose.
pub fn run_episode_from(
    scene: &Scene,
    start_pose: Pose,
    start_label: &str,
    controller: &mut ControllerKind,
    sim: &SimConfig,
    seed: u64,
) -> EpisodeLog {
    let rules = controller.rules(sim);

    let mut log = EpisodeLog {
        start_label: start_label.to_string(),
        seed,
        start_pose,
        desired: match capture_reference(&scene.goal_pose(), scene) {
            Ok(k) => k,
            Err(e) => {
                return EpisodeLog {
                    start_label: start_label.to_string(),
                    seed,
                    start_pose,
                    desired: KeypointSet {
                        fl: crate::camgeo::ImagePoint::new(0.0, 0.0),
                        fr: crate::camgeo::ImagePoint::new(0.0, 0.0),
                        br: crate::camgeo::ImagePoint::new(0.0, 0.0),
                        bl: crate::camgeo::ImagePoint::new(0.0, 0.0),
                    },
                    frames: Vec::new(),
                    outcome: Outcome::Error(format!("reference capture failed: {e}")),
                    rule: None,
                }
            }
        },
        frames: Vec::new(),
        outcome: Outcome::Timeout,
        rule: None,
    };

    let max_frames = (sim.max_duration / sim.dt).floor() as u32;
    let mut pose = start_pose;
    let mut prev_kps: Option<KeypointSet> = None;

    for frame in 0..=max_frames {
        let t = frame as f64 * sim.dt;
        let extr = camera_from_pose(&pose, &scene.gimbal);
        let raster = match rasterize_car(&scene.car, &scene.car_pose, &extr, &scene.intr) {
            Ok(r) => r,
            Err(_) => {
                log.outcome = Outcome::LostTarget;
                return log;
            }
        };
        let (kps, used_fallback) = match perceive(scene, &extr, &raster, prev_kps.as_ref()) {
            Ok(k) => k,
            Err(PerceptionError::AmbiguousAssignment) => {
                log.outcome =
                    Outcome::Error("ambiguous keypoint assignment on first frame".into());
                return log;
            }
            Err(_) => {
                log.outcome = Outcome::LostTarget;
                return log;
            }
        };
        prev_kps = Some(kps);

        let (raw, cmd, singular) = match controller {
            ControllerKind::Teacher(cfg) => {
                let Some(depths) = keypoint_depths(&kps, &extr, scene, &cfg.depth_mode) else {
                    log.outcome = Outcome::LostTarget;
                    return log;
                };
                match control_law(&kps, &log.desired, &depths, &scene.intr, cfg) {
                    Ok(out) => (out.raw, out.command, out.singular),
                    Err(e) => {
                        log.outcome = Outcome::Error(format!("control law: {e}"));
                        return log;
                    }
                }
            }
            ControllerKind::Student(pilot) => match pilot.command(&raster) {
                Ok((raw, cmd)) => (raw, cmd, false),
                Err(_) => {
                    log.outcome = Outcome::LostTarget;
                    return log;
                }
            },
        };

        log.frames.push(FrameRecord {
            frame,
            t,
            pose,
            kps,
            err_norm: err_norm(&kps, &log.desired),
            raw,
            cmd,
            singular,
            used_fallback,
        });

        if let Some(rule) = check_termination(&log.frames, &rules, sim.dt) {
            log.rule = Some(rule);
            log.outcome = match rule {
                RuleKind::HardError => Outcome::ConvergedHard,
                RuleKind::SoftZero => Outcome::ConvergedSoft,
                RuleKind::StudentQuiet => Outcome::ConvergedQuiet,
                RuleKind::HardTimeout => Outcome::Timeout,
            };
            return log;
        }

        pose = crate::simkit::step(&pose, &cmd, sim);
    }
    log.outcome = Outcome::Timeout;
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AppConfig;

    fn setup() -> (Scene, SimConfig, ControlConfig) {
        let cfg = AppConfig::default();
        let scene = Scene::from_config(&cfg);
        let sim = SimConfig {
            dt: cfg.sim.dt,
            k_v: cfg.control.k_v,
            k_w: cfg.control.k_w,
            altitude: cfg.scene.altitude,
            max_duration: cfg.sim.max_duration,
        };
        (scene, sim, cfg.control_config())
    }

    #[test]
    fn reference_capture_is_deterministic_and_symmetric() {
        let (scene, _, _) = setup();
        let goal = scene.goal_pose();
        let a = capture_reference(&goal, &scene).unwrap();
        let b = capture_reference(&goal, &scene).unwrap();
        assert_eq!(a, b);
        // The goal view is symmetric about the vertical centerline.
        let mid = scene.intr.u0;
        assert!((a.fl.u - mid).abs() - (a.fr.u - mid).abs() < 1.0);
        assert!(((a.fl.u + a.fr.u) / 2.0 - mid).abs() < 1.0);
        assert!(((a.bl.u + a.br.u) / 2.0 - mid).abs() < 1.0);
    }

    #[test]
    fn reference_as_current_gives_zero_command() {
        let (scene, _, ctrl) = setup();
        let goal = scene.goal_pose();
        let sref = capture_reference(&goal, &scene).unwrap();
        let extr = camera_from_pose(&goal, &scene.gimbal);
        let depths = keypoint_depths(&sref, &extr, &scene, &ctrl.depth_mode).unwrap();
        let out = control_law(&sref, &sref, &depths, &scene.intr, &ctrl).unwrap();
        assert_eq!(out.command, VelocityCommand::ZERO);
    }

    #[test]
    fn start_at_goal_converges_immediately() {
        let (scene, sim, ctrl) = setup();
        let mut teacher = ControllerKind::Teacher(ctrl);
        let log = run_episode_from(&scene, scene.goal_pose(), "goal", &mut teacher, &sim, 7);
        assert_eq!(log.outcome, Outcome::ConvergedHard, "outcome {:?}", log.outcome);
        // 3 s persistence plus the 5-frame median warmup.
        let expect = (3.0 / sim.dt) as usize + 4;
        assert_eq!(log.frames.len(), expect);
        assert!(log.frames.last().unwrap().t <= 3.0 + 5.0 * sim.dt);
    }

    #[test]
    fn episode_is_deterministic() {
        let (scene, sim, ctrl) = setup();
        let spec = StartPoseSpec {
            label: crate::simkit::StartPose::DownLeft,
            jitter_pos: 0.3,
            jitter_yaw: 5f64.to_radians(),
        };
        let mut t1 = ControllerKind::Teacher(ctrl);
        let mut t2 = ControllerKind::Teacher(ctrl);
        let a = run_episode(&scene, &spec, &mut t1, &sim, 1234);
        let b = run_episode(&scene, &spec, &mut t2, &sim, 1234);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn altitude_never_changes() {
        let (scene, sim, ctrl) = setup();
        let spec = StartPoseSpec {
            label: crate::simkit::StartPose::Left,
            jitter_pos: 0.2,
            jitter_yaw: 3f64.to_radians(),
        };
        let mut teacher = ControllerKind::Teacher(ctrl);
        let log = run_episode(&scene, &spec, &mut teacher, &sim, 5);
        for f in &log.frames {
            assert_eq!(f.pose.z, scene.altitude);
        }
    }
}
