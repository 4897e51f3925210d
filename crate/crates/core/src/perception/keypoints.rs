//! Stable clockwise keypoint ordering from rectangle corners and the
//! front/back mask partition.

use crate::camgeo::ImagePoint;
use crate::perception::{centroid, ObbCorners, PerceptionError, SplitResult};
use serde::{Deserialize, Serialize};

/// Four ordered visual features: front-left, front-right, back-right,
/// back-left. The cycle runs clockwise on screen (v pointing down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub fl: ImagePoint,
    pub fr: ImagePoint,
    pub br: ImagePoint,
    pub bl: ImagePoint,
}

impl KeypointSet {
    pub fn points(&self) -> [ImagePoint; 4] {
        [self.fl, self.fr, self.br, self.bl]
    }

    /// Stacked feature vector (u, v per keypoint in canonical order).
    pub fn flat(&self) -> [f64; 8] {
        [
            self.fl.u, self.fl.v, self.fr.u, self.fr.v, self.br.u, self.br.v, self.bl.u,
            self.bl.v,
        ]
    }
}

/// Signed area of a polygon in image coordinates with v pointing down:
/// negative for a cycle that runs clockwise on screen.
pub fn signed_area(pts: &[ImagePoint]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += (pts[j].u - pts[i].u) * (pts[j].v + pts[i].v);
    }
    s / 2.0
}

fn orient(a: &ImagePoint, b: &ImagePoint, c: &ImagePoint) -> f64 {
    (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u)
}

fn segments_cross(a: &ImagePoint, b: &ImagePoint, c: &ImagePoint, d: &ImagePoint) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn is_simple(q: &[ImagePoint; 4]) -> bool {
    // For a quadrilateral only the two diagonals-of-traversal can cross.
    !segments_cross(&q[0], &q[1], &q[2], &q[3]) && !segments_cross(&q[1], &q[2], &q[3], &q[0])
}

/// Assign rectangle corners to the front or back region by proximity to
/// the respective mask centroids, then order them into the canonical
/// clockwise cycle fl, fr, br, bl.
///
/// Fails with `AmbiguousAssignment` when the corners do not split two and
/// two between the regions; the episode runner falls back to the previous
/// frame's labeling in that case.
pub fn order_keypoints(
    corners: &ObbCorners,
    split: &SplitResult,
) -> Result<KeypointSet, PerceptionError> {
    let cf = centroid(&split.front)?;
    let cb = centroid(&split.back)?;

    let mut front: Vec<ImagePoint> = Vec::with_capacity(2);
    let mut back: Vec<ImagePoint> = Vec::with_capacity(2);
    for p in &corners.0 {
        if p.dist(&cf) < p.dist(&cb) {
            front.push(*p);
        } else {
            back.push(*p);
        }
    }
    if front.len() != 2 || back.len() != 2 {
        return Err(PerceptionError::AmbiguousAssignment);
    }

    // Of the four (front order) x (back order) cycles, exactly one is a
    // simple polygon traversed clockwise on screen.
    for &(f0, f1) in &[(front[0], front[1]), (front[1], front[0])] {
        for &(b0, b1) in &[(back[0], back[1]), (back[1], back[0])] {
            let q = [f0, f1, b0, b1];
            if is_simple(&q) && signed_area(&q) < 0.0 {
                return Ok(KeypointSet { fl: f0, fr: f1, br: b0, bl: b1 });
            }
        }
    }
    Err(PerceptionError::AmbiguousAssignment)
}
