//! Simulated per-pixel segmentation oracle.
//!
//! Stands in for a learned instance-segmentation stage: every pixel center
//! is classified against the projected footprint of the target vehicle, so
//! the produced masks are exact ground truth for the rendered scene.

use crate::camgeo::{project, CameraExtrinsics, CameraIntrinsics, CarModel, ImagePoint, Pose};
use crate::perception::{BinaryMask, PerceptionError, SplitResult};

/// Signed edge function: positive when `p` lies left of the directed
/// segment `a -> b` in (u, v) coordinates.
#[inline]
fn edge(a: &ImagePoint, b: &ImagePoint, pu: f64, pv: f64) -> f64 {
    (b.u - a.u) * (pv - a.v) - (b.v - a.v) * (pu - a.u)
}

/// Shoelace signed area of a polygon in (u, v) coordinates.
fn shoelace(pts: &[ImagePoint]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += pts[i].u * pts[j].v - pts[j].u * pts[i].v;
    }
    s / 2.0
}

/// Rasterize a convex quad onto a mask: a pixel is set when its center
/// lies inside or on the boundary of the quad. Only pixels within the
/// quad's bounding box are tested; everything outside it is trivially
/// outside the quad.
fn classify_quad(quad: &[ImagePoint; 4], width: u32, height: u32) -> Option<BinaryMask> {
    let orient = shoelace(quad);
    if orient.abs() < 1e-12 {
        return None;
    }
    let sgn = orient.signum();
    let mut mask = BinaryMask::new(width, height);
    let (mut u_lo, mut u_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut v_lo, mut v_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in quad {
        u_lo = u_lo.min(p.u);
        u_hi = u_hi.max(p.u);
        v_lo = v_lo.min(p.v);
        v_hi = v_hi.max(p.v);
    }
    let u0 = u_lo.floor().max(0.0) as u32;
    let v0 = v_lo.floor().max(0.0) as u32;
    let u1 = (u_hi.ceil().min(width as f64 - 1.0)).max(0.0) as u32;
    let v1 = (v_hi.ceil().min(height as f64 - 1.0)).max(0.0) as u32;
    if u_lo >= width as f64 || v_lo >= height as f64 || u_hi < 0.0 || v_hi < 0.0 {
        return Some(mask);
    }
    for v in v0..=v1 {
        let pv = v as f64;
        for u in u0..=u1 {
            let pu = u as f64;
            let inside = (0..4).all(|i| {
                let j = (i + 1) % 4;
                sgn * edge(&quad[i], &quad[j], pu, pv) >= 0.0
            });
            if inside {
                mask.set(u, v, true);
            }
        }
    }
    Some(mask)
}

/// Project the car footprint corners (front-left, front-right, back-right,
/// back-left) into the image.
pub fn project_footprint(
    car: &CarModel,
    car_pose: &Pose,
    extr: &CameraExtrinsics,
    intr: &CameraIntrinsics,
) -> Result<[ImagePoint; 4], PerceptionError> {
    let mut out = [ImagePoint::new(0.0, 0.0); 4];
    for (i, corner) in car.world_footprint(car_pose).iter().enumerate() {
        out[i] = project(corner, extr, intr).map_err(|_| PerceptionError::TargetNotVisible)?;
    }
    Ok(out)
}

/// Projected midpoint of the car's front edge; used by the simulator as
/// the orientation hint for mask splitting.
pub fn project_front_hint(
    car: &CarModel,
    car_pose: &Pose,
    extr: &CameraExtrinsics,
    intr: &CameraIntrinsics,
) -> Result<ImagePoint, PerceptionError> {
    project(&car.world_front_midpoint(car_pose), extr, intr)
        .map_err(|_| PerceptionError::TargetNotVisible)
}

/// Segmentation oracle output: the full vehicle mask plus the ground-truth
/// anterior/posterior partition of it.
#[derive(Debug, Clone)]
pub struct RasterOutput {
    pub mask: BinaryMask,
    pub gt: SplitResult,
}

/// Classify every pixel of the image against the projected vehicle
/// footprint. The ground-truth front/back masks split the footprint at the
/// car's lateral midline and always partition `mask` exactly.
pub fn rasterize_car(
    car: &CarModel,
    car_pose: &Pose,
    extr: &CameraExtrinsics,
    intr: &CameraIntrinsics,
) -> Result<RasterOutput, PerceptionError> {
    let quad = project_footprint(car, car_pose, extr, intr)?;
    let mask = classify_quad(&quad, intr.width, intr.height)
        .ok_or(PerceptionError::TargetNotVisible)?;
    if mask.count() == 0 {
        return Err(PerceptionError::TargetNotVisible);
    }

    // Front half of the footprint: front corners plus midline endpoints.
    let [ml, mr] = car.world_midline(car_pose);
    let front_quad = [
        quad[0],
        quad[1],
        project(&mr, extr, intr).map_err(|_| PerceptionError::TargetNotVisible)?,
        project(&ml, extr, intr).map_err(|_| PerceptionError::TargetNotVisible)?,
    ];
    let front_half =
        classify_quad(&front_quad, intr.width, intr.height).unwrap_or_else(|| {
            BinaryMask::new(intr.width, intr.height)
        });

    // Clip to the full mask so front/back always partition it exactly,
    // even if boundary pixels round differently between the two quads.
    let mut front = BinaryMask::new(intr.width, intr.height);
    let mut back = BinaryMask::new(intr.width, intr.height);
    for v in 0..intr.height {
        for u in 0..intr.width {
            if mask.get(u, v) {
                if front_half.get(u, v) {
                    front.set(u, v, true);
                } else {
                    back.set(u, v, true);
                }
            }
        }
    }
    Ok(RasterOutput { mask, gt: SplitResult { front, back } })
}
