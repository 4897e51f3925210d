//! Minimum-area oriented bounding box of a mask via convex hull and
//! rotating calipers.

use crate::camgeo::ImagePoint;
use crate::perception::{BinaryMask, PerceptionError};

/// Four corners of the fitted rectangle, in a simple (non-crossing) cycle
/// but otherwise unordered with respect to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObbCorners(pub [ImagePoint; 4]);

#[inline]
fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew monotone-chain convex hull. Input points need not be unique;
/// collinear points on the hull boundary are dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * n);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Candidate points for the hull: the leftmost and rightmost set pixel of
/// each row. Every hull vertex is an extreme point of its row, so the hull
/// of these candidates equals the hull of all set pixels.
fn row_extremes(mask: &BinaryMask) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for v in 0..mask.height {
        let mut first: Option<u32> = None;
        let mut last = 0u32;
        for u in 0..mask.width {
            if mask.get(u, v) {
                if first.is_none() {
                    first = Some(u);
                }
                last = u;
            }
        }
        if let Some(f) = first {
            pts.push((f as f64, v as f64));
            if last != f {
                pts.push((last as f64, v as f64));
            }
        }
    }
    pts
}

/// Minimum-area rectangle containing all set pixel centers. The optimal
/// rectangle has one edge parallel to a convex-hull edge, so each hull
/// edge direction is examined in turn.
pub fn min_area_obb(mask: &BinaryMask) -> Result<ObbCorners, PerceptionError> {
    let pts = row_extremes(mask);
    if pts.is_empty() {
        return Err(PerceptionError::DegenerateMask);
    }
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return Err(PerceptionError::DegenerateMask);
    }

    let mut best_area = f64::INFINITY;
    let mut best: Option<[ImagePoint; 4]> = None;
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len < 1e-12 {
            continue;
        }
        let d = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let nrm = (-d.1, d.0);
        let mut smin = f64::INFINITY;
        let mut smax = f64::NEG_INFINITY;
        let mut tmin = f64::INFINITY;
        let mut tmax = f64::NEG_INFINITY;
        for &p in &hull {
            let s = p.0 * d.0 + p.1 * d.1;
            let t = p.0 * nrm.0 + p.1 * nrm.1;
            smin = smin.min(s);
            smax = smax.max(s);
            tmin = tmin.min(t);
            tmax = tmax.max(t);
        }
        let area = (smax - smin) * (tmax - tmin);
        if area < best_area {
            best_area = area;
            let corner = |s: f64, t: f64| {
                ImagePoint::new(s * d.0 + t * nrm.0, s * d.1 + t * nrm.1)
            };
            best = Some([
                corner(smin, tmin),
                corner(smax, tmin),
                corner(smax, tmax),
                corner(smin, tmax),
            ]);
        }
    }
    best.map(ObbCorners).ok_or(PerceptionError::DegenerateMask)
}

impl ObbCorners {
    pub fn area(&self) -> f64 {
        let p = &self.0;
        let mut s = 0.0;
        for i in 0..4 {
            let j = (i + 1) % 4;
            s += p[i].u * p[j].v - p[j].u * p[i].v;
        }
        (s / 2.0).abs()
    }

    /// True when every set pixel center lies inside the rectangle, up to
    /// `slack` along each edge normal.
    pub fn contains_all(&self, mask: &BinaryMask, slack: f64) -> bool {
        let p = &self.0;
        let orient = {
            let mut s = 0.0;
            for i in 0..4 {
                let j = (i + 1) % 4;
                s += p[i].u * p[j].v - p[j].u * p[i].v;
            }
            s.signum()
        };
        for v in 0..mask.height {
            for u in 0..mask.width {
                if !mask.get(u, v) {
                    continue;
                }
                for i in 0..4 {
                    let j = (i + 1) % 4;
                    let e = (p[j].u - p[i].u) * (v as f64 - p[i].v)
                        - (p[j].v - p[i].v) * (u as f64 - p[i].u);
                    let edge_len = p[i].dist(&p[j]).max(1e-12);
                    if orient * e / edge_len < -slack {
                        return false;
                    }
                }
            }
        }
        true
    }
}
