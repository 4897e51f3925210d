//! Quad intersection-over-union via Sutherland-Hodgman clipping.

use crate::camgeo::ImagePoint;
use crate::evalkit::EvalError;
use crate::evalkit::Quad;

/// Shoelace area, absolute value.
pub fn polygon_area(pts: &[ImagePoint]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += pts[i].u * pts[j].v - pts[j].u * pts[i].v;
    }
    (s / 2.0).abs()
}

fn signed(pts: &[ImagePoint]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += pts[i].u * pts[j].v - pts[j].u * pts[i].v;
    }
    s / 2.0
}

#[inline]
fn edge_side(a: &ImagePoint, b: &ImagePoint, p: &ImagePoint) -> f64 {
    (b.u - a.u) * (p.v - a.v) - (b.v - a.v) * (p.u - a.u)
}

fn intersect(a: &ImagePoint, b: &ImagePoint, p: &ImagePoint, q: &ImagePoint) -> ImagePoint {
    let d1 = edge_side(a, b, p);
    let d2 = edge_side(a, b, q);
    let t = d1 / (d1 - d2);
    ImagePoint::new(p.u + t * (q.u - p.u), p.v + t * (q.v - p.v))
}

/// Clip `subject` against one half-plane of the directed edge a -> b
/// (keeping the positive side).
fn clip_edge(subject: &[ImagePoint], a: &ImagePoint, b: &ImagePoint) -> Vec<ImagePoint> {
    let mut out = Vec::with_capacity(subject.len() + 1);
    let n = subject.len();
    for i in 0..n {
        let p = &subject[i];
        let q = &subject[(i + 1) % n];
        let pin = edge_side(a, b, p) >= 0.0;
        let qin = edge_side(a, b, q) >= 0.0;
        match (pin, qin) {
            (true, true) => out.push(*q),
            (true, false) => out.push(intersect(a, b, p, q)),
            (false, true) => {
                out.push(intersect(a, b, p, q));
                out.push(*q);
            }
            (false, false) => {}
        }
    }
    out
}

/// Intersection of two convex polygons by iterated half-plane clipping.
pub fn clip_convex(subject: &[ImagePoint], clip: &[ImagePoint]) -> Vec<ImagePoint> {
    // Orient the clip polygon counterclockwise so the positive side of
    // each edge is the interior.
    let mut clip_ccw: Vec<ImagePoint> = clip.to_vec();
    if signed(&clip_ccw) < 0.0 {
        clip_ccw.reverse();
    }
    let mut result = subject.to_vec();
    let n = clip_ccw.len();
    for i in 0..n {
        if result.len() < 3 {
            return Vec::new();
        }
        result = clip_edge(&result, &clip_ccw[i], &clip_ccw[(i + 1) % n]);
    }
    result
}

/// Intersection over union of two convex quads.
pub fn quad_iou(a: &Quad, b: &Quad) -> Result<f64, EvalError> {
    let area_a = polygon_area(&a.0);
    let area_b = polygon_area(&b.0);
    if area_a < 1e-12 || area_b < 1e-12 {
        return Err(EvalError::DegenerateQuad);
    }
    let inter = polygon_area(&clip_convex(&a.0, &b.0));
    let union = area_a + area_b - inter;
    Ok(inter / union)
}
