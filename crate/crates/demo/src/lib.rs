//! Browser demo: drag the drone around the target car, watch the
//! stabilized keypoints and the commanded velocities, and fly complete
//! closed-loop episodes in the digital twin.
//!
//! Build with `wasm-pack build --target web crates/demo` and serve the
//! `www/` page next to the generated `pkg/` directory.

use nser_core::camgeo::{camera_from_pose, ground_depth, Pose};
use nser_core::config::AppConfig;
use nser_core::perception::{
    centroid, min_area_obb, order_keypoints, project_footprint, project_front_hint,
    rasterize_car, split_mask, KeypointSet,
};
use nser_core::servo::{control_law, DepthMode, ServoOutput};
use nser_core::simkit::{
    capture_reference, run_episode_from, ControllerKind, Scene, SimConfig, StartPose,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct PointJson {
    u: f64,
    v: f64,
}

impl From<&nser_core::camgeo::ImagePoint> for PointJson {
    fn from(p: &nser_core::camgeo::ImagePoint) -> Self {
        Self { u: p.u, v: p.v }
    }
}

#[derive(Serialize)]
struct KeypointsJson {
    fl: PointJson,
    fr: PointJson,
    br: PointJson,
    bl: PointJson,
}

impl From<&KeypointSet> for KeypointsJson {
    fn from(k: &KeypointSet) -> Self {
        Self {
            fl: PointJson::from(&k.fl),
            fr: PointJson::from(&k.fr),
            br: PointJson::from(&k.br),
            bl: PointJson::from(&k.bl),
        }
    }
}

#[derive(Serialize)]
struct FrameJson {
    visible: bool,
    /// Projected footprint quad (fl, fr, br, bl order), image pixels.
    quad: Vec<PointJson>,
    /// Fitted rectangle corners.
    obb: Vec<PointJson>,
    keypoints: Option<KeypointsJson>,
    reference: KeypointsJson,
    front_centroid: Option<PointJson>,
    err_norm: Option<f64>,
    /// Raw (unquantized, clamped) actuator-unit commands.
    cmd: Option<[f64; 3]>,
    singular: bool,
}

#[derive(Serialize)]
struct TrajFrame {
    t: f64,
    x: f64,
    y: f64,
    yaw: f64,
    err: f64,
    cmd: [f64; 3],
}

#[derive(Serialize)]
struct EpisodeJson {
    outcome: String,
    frames: Vec<TrajFrame>,
}

#[derive(Serialize)]
struct WorldJson {
    car: Vec<[f64; 2]>,
    goal: [f64; 3],
    starts: Vec<(String, [f64; 3])>,
    image_width: u32,
    image_height: u32,
    altitude: f64,
}

/// The interactive scene: fixed target, configurable drone pose.
#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    sim: SimConfig,
    cfg: AppConfig,
    reference: KeypointSet,
}

impl Default for Demo {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        let cfg = AppConfig::default();
        let scene = Scene::from_config(&cfg);
        let sim = SimConfig {
            dt: cfg.sim.dt,
            k_v: cfg.control.k_v,
            k_w: cfg.control.k_w,
            altitude: cfg.scene.altitude,
            max_duration: cfg.sim.max_duration,
        };
        let reference =
            capture_reference(&scene.goal_pose(), &scene).expect("goal view is valid");
        Demo { scene, sim, cfg, reference }
    }

    /// Static world geometry for drawing the top-down view.
    pub fn world(&self) -> String {
        let corners = self.scene.car.world_footprint(&self.scene.car_pose);
        let goal = self.scene.goal_pose();
        let world = WorldJson {
            car: corners.iter().map(|c| [c.x, c.y]).collect(),
            goal: [goal.x, goal.y, goal.yaw],
            starts: StartPose::ALL
                .iter()
                .map(|p| {
                    let s = self.scene.nominal_start(*p);
                    (p.label().to_string(), [s.x, s.y, s.yaw])
                })
                .collect(),
            image_width: self.scene.intr.width,
            image_height: self.scene.intr.height,
            altitude: self.scene.altitude,
        };
        serde_json::to_string(&world).unwrap()
    }

    /// One perception + control evaluation at an arbitrary drone pose:
    /// projected car, fitted rectangle, ordered keypoints, and the
    /// commanded velocities against the goal reference.
    pub fn view_frame(&self, x: f64, y: f64, yaw_deg: f64) -> String {
        let pose = Pose::new(x, y, self.scene.altitude, yaw_deg.to_radians());
        let extr = camera_from_pose(&pose, &self.scene.gimbal);

        let empty = |quad: Vec<PointJson>, reference: KeypointsJson| FrameJson {
            visible: false,
            quad,
            obb: Vec::new(),
            keypoints: None,
            reference,
            front_centroid: None,
            err_norm: None,
            cmd: None,
            singular: false,
        };

        let quad = project_footprint(&self.scene.car, &self.scene.car_pose, &extr, &self.scene.intr)
            .map(|q| q.iter().map(PointJson::from).collect::<Vec<_>>())
            .unwrap_or_default();
        let Ok(raster) =
            rasterize_car(&self.scene.car, &self.scene.car_pose, &extr, &self.scene.intr)
        else {
            return serde_json::to_string(&empty(quad, KeypointsJson::from(&self.reference)))
                .unwrap();
        };
        let Ok(c) = centroid(&raster.mask) else {
            return serde_json::to_string(&empty(quad, KeypointsJson::from(&self.reference)))
                .unwrap();
        };
        let (obb, kps, front_centroid) = match (
            project_front_hint(&self.scene.car, &self.scene.car_pose, &extr, &self.scene.intr),
            min_area_obb(&raster.mask),
        ) {
            (Ok(hint), Ok(obb)) => match split_mask(&raster.mask, &c, &hint) {
                Ok(split) => {
                    let fc = centroid(&split.front).ok();
                    (Some(obb), order_keypoints(&obb, &split).ok(), fc)
                }
                Err(_) => (Some(obb), None, None),
            },
            (_, Ok(obb)) => (Some(obb), None, None),
            _ => (None, None, None),
        };

        let mut out = FrameJson {
            visible: true,
            quad,
            obb: obb.map(|o| o.0.iter().map(PointJson::from).collect()).unwrap_or_default(),
            keypoints: kps.as_ref().map(KeypointsJson::from),
            reference: KeypointsJson::from(&self.reference),
            front_centroid: front_centroid.as_ref().map(PointJson::from),
            err_norm: None,
            cmd: None,
            singular: false,
        };
        if let Some(kps) = kps {
            if let Some(depths) = self.depths(&kps, &extr) {
                if let Ok(ServoOutput { raw, error, singular, .. }) = control_law(
                    &kps,
                    &self.reference,
                    &depths,
                    &self.scene.intr,
                    &self.cfg.control_config(),
                ) {
                    out.err_norm = Some(error.norm());
                    out.cmd = Some([raw.vx, raw.vy, raw.wz]);
                    out.singular = singular;
                }
            }
        }
        serde_json::to_string(&out).unwrap()
    }

    /// Fly a complete teacher episode from the given start pose; returns
    /// the trajectory, per-frame error, and commands.
    pub fn fly(&self, x: f64, y: f64, yaw_deg: f64, seed: u32) -> String {
        let start = Pose::new(x, y, self.scene.altitude, yaw_deg.to_radians());
        let mut teacher = ControllerKind::Teacher(self.cfg.control_config());
        let log =
            run_episode_from(&self.scene, start, "demo", &mut teacher, &self.sim, seed as u64);
        let out = EpisodeJson {
            outcome: log.outcome.label(),
            frames: log
                .frames
                .iter()
                .map(|f| TrajFrame {
                    t: f.t,
                    x: f.pose.x,
                    y: f.pose.y,
                    yaw: f.pose.yaw,
                    err: f.err_norm,
                    cmd: [f.raw.vx, f.raw.vy, f.raw.wz],
                })
                .collect(),
        };
        serde_json::to_string(&out).unwrap()
    }
}

impl Demo {
    fn depths(
        &self,
        kps: &KeypointSet,
        extr: &nser_core::camgeo::CameraExtrinsics,
    ) -> Option<[f64; 4]> {
        match self.cfg.control_config().depth_mode {
            DepthMode::Constant(z) => Some([z; 4]),
            DepthMode::GroundTruth => {
                let mut d = [0.0; 4];
                for (i, p) in kps.points().iter().enumerate() {
                    d[i] = ground_depth(p, extr, &self.scene.intr).ok()?;
                }
                Some(d)
            }
        }
    }
}
