//! Pinhole camera model, world geometry, and projection of the target
//! vehicle into the image plane.
//!
//! Frames: the world is right-handed with z up; the camera frame is
//! z-forward, x-right, y-down, so the interaction-matrix sign conventions
//! in [`crate::servo`] hold verbatim. The drone flies at fixed altitude
//! with zero roll; the gimbal pitches the optical axis down from the
//! drone's forward axis and is mechanically stabilized.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depth below this (meters) counts as "behind or at the camera".
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point has non-positive camera depth (z = {z})")]
    NonPositiveDepth { z: f64 },
}

/// Pinhole intrinsics with square pixels and no skew.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub f: f64,
    /// Principal point, pixels.
    pub u0: f64,
    pub v0: f64,
    /// Image size in pixels.
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// Build intrinsics from a horizontal field of view in degrees,
    /// placing the principal point at the image center.
    pub fn from_hfov(width: u32, height: u32, hfov_deg: f64) -> Self {
        let half = (hfov_deg.to_radians() / 2.0).tan();
        Self {
            f: width as f64 / (2.0 * half),
            u0: width as f64 / 2.0,
            v0: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn contains(&self, p: &ImagePoint) -> bool {
        p.u >= 0.0 && p.u < self.width as f64 && p.v >= 0.0 && p.v < self.height as f64
    }
}

/// Planar pose in the world frame: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Altitude, meters. Zero for the ground target.
    pub z: f64,
    /// Heading, radians, normalized to (-pi, pi].
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw: normalize_angle(yaw) }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Unit forward axis in the world xy-plane.
    pub fn forward(&self) -> Vector3<f64> {
        Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Gimbal mount: pitch down from horizontal, radians, in (0, pi/2].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GimbalConfig {
    pub pitch: f64,
}

impl Default for GimbalConfig {
    fn default() -> Self {
        Self { pitch: 45f64.to_radians() }
    }
}

/// Ground-vehicle target: a rectangular footprint with a marked front.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CarModel {
    /// Length along the driving axis, meters.
    pub length: f64,
    /// Track width, meters. Must be smaller than `length`.
    pub width: f64,
}

impl CarModel {
    /// Footprint corners in the car body frame (x forward, y left),
    /// ordered front-left, front-right, back-right, back-left.
    pub fn footprint(&self) -> [Vector3<f64>; 4] {
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [
            Vector3::new(hl, hw, 0.0),
            Vector3::new(hl, -hw, 0.0),
            Vector3::new(-hl, -hw, 0.0),
            Vector3::new(-hl, hw, 0.0),
        ]
    }

    /// Unit vector marking the anterior direction, body frame.
    pub fn front_axis(&self) -> Vector3<f64> {
        Vector3::new(1.0, 0.0, 0.0)
    }

    /// Footprint corners in the world frame for a given car pose
    /// (the footprint sits on the ground plane z = 0).
    pub fn world_footprint(&self, pose: &Pose) -> [Vector3<f64>; 4] {
        self.footprint().map(|c| body_to_world(&c, pose))
    }

    /// World-frame midpoint of the front edge; the simulator's
    /// orientation hint for mask splitting.
    pub fn world_front_midpoint(&self, pose: &Pose) -> Vector3<f64> {
        body_to_world(&Vector3::new(self.length / 2.0, 0.0, 0.0), pose)
    }

    /// World-frame endpoints of the lateral midline separating the
    /// front half of the footprint from the back half.
    pub fn world_midline(&self, pose: &Pose) -> [Vector3<f64>; 2] {
        let hw = self.width / 2.0;
        [
            body_to_world(&Vector3::new(0.0, hw, 0.0), pose),
            body_to_world(&Vector3::new(0.0, -hw, 0.0), pose),
        ]
    }
}

fn body_to_world(p: &Vector3<f64>, pose: &Pose) -> Vector3<f64> {
    let (s, c) = pose.yaw.sin_cos();
    Vector3::new(
        pose.x + c * p.x - s * p.y,
        pose.y + s * p.x + c * p.y,
        p.z,
    )
}

/// Continuous pixel coordinates. May lie outside the image before
/// visibility filtering; pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn dist(&self, other: &ImagePoint) -> f64 {
        ((self.u - other.u).powi(2) + (self.v - other.v).powi(2)).sqrt()
    }
}

/// World-to-camera rigid transform: `p_cam = r * (p_world - center)`.
#[derive(Debug, Clone, Copy)]
pub struct CameraExtrinsics {
    /// Rows are the camera axes (x right, y down, z forward) in world
    /// coordinates.
    pub r: Matrix3<f64>,
    /// Camera center in world coordinates.
    pub center: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r * (p - self.center)
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r.transpose() * p + self.center
    }

    /// World-frame direction of the pixel ray through (u, v).
    pub fn pixel_ray(&self, p: &ImagePoint, intr: &CameraIntrinsics) -> Vector3<f64> {
        let d = Vector3::new((p.u - intr.u0) / intr.f, (p.v - intr.v0) / intr.f, 1.0);
        self.r.transpose() * d
    }
}

/// Rigid transform of the gimbal camera for a drone pose: the optical
/// axis points `gimbal.pitch` below the drone's forward axis, with zero
/// roll, and the camera center coincides with the drone position.
pub fn camera_from_pose(drone: &Pose, gimbal: &GimbalConfig) -> CameraExtrinsics {
    let (sy, cy) = drone.yaw.sin_cos();
    let (sp, cp) = gimbal.pitch.sin_cos();
    let x_cam = Vector3::new(sy, -cy, 0.0);
    let y_cam = Vector3::new(-sp * cy, -sp * sy, -cp);
    let z_cam = Vector3::new(cp * cy, cp * sy, -sp);
    CameraExtrinsics {
        r: Matrix3::from_rows(&[x_cam.transpose(), y_cam.transpose(), z_cam.transpose()]),
        center: drone.position(),
    }
}

/// Project a world point through the pinhole model:
/// `u = u0 + f*X/Z`, `v = v0 + f*Y/Z` in the camera frame.
pub fn project(
    point_world: &Vector3<f64>,
    extr: &CameraExtrinsics,
    intr: &CameraIntrinsics,
) -> Result<ImagePoint, GeomError> {
    let p = extr.world_to_camera(point_world);
    if p.z <= MIN_DEPTH {
        return Err(GeomError::NonPositiveDepth { z: p.z });
    }
    Ok(ImagePoint::new(
        intr.u0 + intr.f * p.x / p.z,
        intr.v0 + intr.f * p.y / p.z,
    ))
}

/// Camera-frame depth (Z coordinate) of a world point.
pub fn depth_of(point_world: &Vector3<f64>, extr: &CameraExtrinsics) -> Result<f64, GeomError> {
    let z = extr.world_to_camera(point_world).z;
    if z <= MIN_DEPTH {
        return Err(GeomError::NonPositiveDepth { z });
    }
    Ok(z)
}

/// Depth of the ground-plane point (z = 0) seen at pixel `p`. This is the
/// simulator's ground-truth depth source for image features on the target,
/// which sits on the ground.
pub fn ground_depth(
    p: &ImagePoint,
    extr: &CameraExtrinsics,
    intr: &CameraIntrinsics,
) -> Result<f64, GeomError> {
    let dir = extr.pixel_ray(p, intr);
    if dir.z >= -1e-12 {
        // Ray parallel to or away from the ground: no intersection ahead.
        return Err(GeomError::NonPositiveDepth { z: 0.0 });
    }
    let t = -extr.center.z / dir.z;
    let hit = extr.center + dir * t;
    depth_of(&hit, extr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(640, 360, 69.0)
    }

    // Independent oracle: explicit 3x4 homogeneous projection matrix
    // multiply, built from scratch rather than via CameraExtrinsics.
    fn oracle_project(
        p: &Vector3<f64>,
        extr: &CameraExtrinsics,
        intr: &CameraIntrinsics,
    ) -> (f64, f64, f64) {
        let k = [
            [intr.f, 0.0, intr.u0],
            [0.0, intr.f, intr.v0],
            [0.0, 0.0, 1.0],
        ];
        // [R | -R c]
        let mut rt = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = extr.r[(i, j)];
            }
            rt[i][3] = -(extr.r[(i, 0)] * extr.center.x
                + extr.r[(i, 1)] * extr.center.y
                + extr.r[(i, 2)] * extr.center.z);
        }
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                for l in 0..3 {
                    m[i][j] += k[i][l] * rt[l][j];
                }
            }
        }
        let h = [p.x, p.y, p.z, 1.0];
        let mut out = [0.0; 3];
        for i in 0..3 {
            for j in 0..4 {
                out[i] += m[i][j] * h[j];
            }
        }
        (out[0] / out[2], out[1] / out[2], out[2])
    }

    #[test]
    fn straight_down_at_right_angle_pitch() {
        let drone = Pose::new(0.0, 0.0, 2.0, 0.0);
        let extr = camera_from_pose(&drone, &GimbalConfig { pitch: 90f64.to_radians() });
        // Optical axis is the third row of r, expressed in world coords.
        let axis = Vector3::new(extr.r[(2, 0)], extr.r[(2, 1)], extr.r[(2, 2)]);
        assert!((axis - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn forty_five_degree_point_on_axis() {
        let drone = Pose::new(0.0, 0.0, 2.0, 0.0);
        let extr = camera_from_pose(&drone, &GimbalConfig::default());
        // 1 m ahead, 1 m below the camera center.
        let p = Vector3::new(1.0, 0.0, 1.0);
        let ip = project(&p, &extr, &intr()).unwrap();
        assert!((ip.u - intr().u0).abs() < 1e-9);
        assert!((ip.v - intr().v0).abs() < 1e-9);
    }

    #[test]
    fn transform_roundtrip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let drone = Pose::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(-3.0..3.0),
            );
            let extr = camera_from_pose(&drone, &GimbalConfig::default());
            let p = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let back = extr.camera_to_world(&extr.world_to_camera(&p));
            assert!((back - p).norm() < 1e-12);
        }
    }

    #[test]
    fn principal_point_and_unit_slope() {
        let drone = Pose::new(0.0, 0.0, 1.5, 0.0);
        let extr = camera_from_pose(&drone, &GimbalConfig::default());
        let intr = intr();
        // Point on the optical axis.
        let z = extr.r.transpose() * Vector3::new(0.0, 0.0, 2.0) + extr.center;
        let ip = project(&z, &extr, &intr).unwrap();
        assert!((ip.u - intr.u0).abs() < 1e-9 && (ip.v - intr.v0).abs() < 1e-9);
        // X = Z in the camera frame, Y = 0.
        let p = extr.camera_to_world(&Vector3::new(2.0, 0.0, 2.0));
        let ip = project(&p, &extr, &intr).unwrap();
        assert!((ip.u - (intr.u0 + intr.f)).abs() < 1e-9);
        assert!((ip.v - intr.v0).abs() < 1e-9);
    }

    #[test]
    fn projection_matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let intr = intr();
        let mut tested = 0;
        while tested < 500 {
            let drone = Pose::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(-3.1..3.1),
            );
            let extr = camera_from_pose(&drone, &GimbalConfig::default());
            let p = Vector3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-1.0..2.0),
            );
            let (ou, ov, oz) = oracle_project(&p, &extr, &intr);
            if oz <= MIN_DEPTH {
                assert!(project(&p, &extr, &intr).is_err());
                continue;
            }
            if oz < 0.1 {
                // Grazing depths blow up the projection scale; absolute
                // pixel comparisons are only meaningful at sane range.
                continue;
            }
            let ip = project(&p, &extr, &intr).unwrap();
            assert!((ip.u - ou).abs() < 1e-9, "u {} vs {}", ip.u, ou);
            assert!((ip.v - ov).abs() < 1e-9);
            assert!((depth_of(&p, &extr).unwrap() - oz).abs() < 1e-12);
            tested += 1;
        }
    }

    #[test]
    fn depth_examples() {
        // Straight down from height h: ground point below has depth h.
        let h = 1.8;
        let drone = Pose::new(0.5, -0.2, h, 1.0);
        let extr = camera_from_pose(&drone, &GimbalConfig { pitch: 90f64.to_radians() });
        let below = Vector3::new(0.5, -0.2, 0.0);
        assert!((depth_of(&below, &extr).unwrap() - h).abs() < 1e-12);

        // 45 degrees: ground point on the optical axis at horizontal
        // distance h has depth h * sqrt(2).
        let drone = Pose::new(0.0, 0.0, h, 0.0);
        let extr = camera_from_pose(&drone, &GimbalConfig::default());
        let ahead = Vector3::new(h, 0.0, 0.0);
        assert!((depth_of(&ahead, &extr).unwrap() - h * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_error() {
        let drone = Pose::new(0.0, 0.0, 1.5, 0.0);
        let extr = camera_from_pose(&drone, &GimbalConfig::default());
        let behind = Vector3::new(-3.0, 0.0, 1.5);
        assert!(matches!(
            project(&behind, &extr, &intr()),
            Err(GeomError::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn reprojection_recovers_world_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let intr = intr();
        for _ in 0..200 {
            let drone = Pose::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(1.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let extr = camera_from_pose(&drone, &GimbalConfig::default());
            let p_cam = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..4.0),
            );
            let p = extr.camera_to_world(&p_cam);
            let ip = project(&p, &extr, &intr).unwrap();
            let z = depth_of(&p, &extr).unwrap();
            let dir = extr.pixel_ray(&ip, &intr);
            // pixel_ray has unit z in the camera frame, so scaling by the
            // camera depth lands back on the point.
            let recovered = extr.center + dir * z;
            assert!((recovered - p).norm() < 1e-9);
        }
    }

    #[test]
    fn yaw_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let intr = intr();
        for _ in 0..100 {
            let yaw = rng.random_range(-3.0..3.0);
            let rot: f64 = rng.random_range(-3.0..3.0);
            let drone = Pose::new(1.0, 0.5, 1.5, yaw);
            let p = Vector3::new(rng.random_range(1.0..3.0), rng.random_range(-1.0..1.0), 0.0);
            let extr = camera_from_pose(&drone, &GimbalConfig::default());
            let a = project(&p, &extr, &intr);

            // Rotate drone and world together about the origin.
            let (s, c) = rot.sin_cos();
            let rp = Vector3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z);
            let rd = Pose::new(
                c * drone.x - s * drone.y,
                s * drone.x + c * drone.y,
                drone.z,
                yaw + rot,
            );
            let rextr = camera_from_pose(&rd, &GimbalConfig::default());
            let b = project(&rp, &rextr, &intr);
            match (a, b) {
                (Ok(pa), Ok(pb)) => {
                    assert!((pa.u - pb.u).abs() < 1e-9 && (pa.v - pb.v).abs() < 1e-9);
                }
                (Err(_), Err(_)) => {}
                _ => panic!("visibility changed under joint rotation"),
            }
        }
    }

    #[test]
    fn angle_normalization() {
        assert!((normalize_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((normalize_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(normalize_angle(0.25), 0.25);
    }
}
