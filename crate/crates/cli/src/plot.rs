//! SVG trajectory plots: mean path with a min/max envelope band per
//! start pose, the car footprint, and the goal marker.

use nser_core::simkit::{EpisodeLog, Scene, StartPose};
use std::fmt::Write;

const COLORS: [&str; 8] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Resample a path to `k` points at uniform progress.
fn resample(path: &[(f64, f64)], k: usize) -> Vec<(f64, f64)> {
    if path.len() < 2 {
        return vec![path.first().copied().unwrap_or((0.0, 0.0)); k];
    }
    (0..k)
        .map(|i| {
            let t = i as f64 / (k - 1) as f64 * (path.len() - 1) as f64;
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(path.len() - 1);
            let f = t - lo as f64;
            (
                path[lo].0 * (1.0 - f) + path[hi].0 * f,
                path[lo].1 * (1.0 - f) + path[hi].1 * f,
            )
        })
        .collect()
}

/// Render the campaign's trajectories: one mean path and variability band
/// per pose, in world coordinates (x right, y up).
pub fn trajectories_svg(scene: &Scene, logs: &[EpisodeLog]) -> String {
    const K: usize = 100;
    let (w, h) = (720.0, 560.0);

    // Gather world extent.
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for log in logs {
        for f in &log.frames {
            xmin = xmin.min(f.pose.x);
            xmax = xmax.max(f.pose.x);
            ymin = ymin.min(f.pose.y);
            ymax = ymax.max(f.pose.y);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (-3.0, 3.0, -3.0, 3.0);
    }
    let margin = 0.5;
    xmin -= margin;
    xmax += margin;
    ymin -= margin;
    ymax += margin;
    let scale = ((w - 40.0) / (xmax - xmin)).min((h - 40.0) / (ymax - ymin));
    let sx = move |x: f64| 20.0 + (x - xmin) * scale;
    let sy = move |y: f64| h - 20.0 - (y - ymin) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    for (pi, pose) in StartPose::ALL.iter().enumerate() {
        let runs: Vec<Vec<(f64, f64)>> = logs
            .iter()
            .filter(|l| l.start_label == pose.label())
            .map(|l| {
                resample(
                    &l.frames.iter().map(|f| (f.pose.x, f.pose.y)).collect::<Vec<_>>(),
                    K,
                )
            })
            .collect();
        if runs.is_empty() {
            continue;
        }
        let color = COLORS[pi % COLORS.len()];
        // Envelope band: min/max per resampled step.
        let mut upper = Vec::with_capacity(K);
        let mut lower = Vec::with_capacity(K);
        let mut mean = Vec::with_capacity(K);
        for i in 0..K {
            let xs: Vec<f64> = runs.iter().map(|r| r[i].0).collect();
            let ys: Vec<f64> = runs.iter().map(|r| r[i].1).collect();
            let mx = xs.iter().sum::<f64>() / xs.len() as f64;
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            mean.push((mx, my));
            upper.push((mx, ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            lower.push((mx, ys.iter().cloned().fold(f64::INFINITY, f64::min)));
        }
        let mut band = String::new();
        for (i, &(x, y)) in upper.iter().enumerate() {
            let _ = write!(band, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        for &(x, y) in lower.iter().rev() {
            let _ = write!(band, "L{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(svg, r#"<path d="{band}Z" fill="{color}" opacity="0.15" stroke="none"/>"#);
        let mut line = String::new();
        for (i, &(x, y)) in mean.iter().enumerate() {
            let _ = write!(line, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{line}" fill="none" stroke="{color}" stroke-width="1.8"/>"#
        );
        // Start marker + label.
        let (x0, y0) = mean[0];
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{}</text>"#,
            sx(x0),
            sy(y0),
            sx(x0) + 6.0,
            sy(y0) - 4.0,
            pose.label()
        );
    }

    // Car footprint.
    let corners = scene.car.world_footprint(&scene.car_pose);
    let mut car = String::new();
    for (i, c) in corners.iter().enumerate() {
        let _ = write!(car, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(c.x), sy(c.y));
    }
    let _ = writeln!(svg, r##"<path d="{car}Z" fill="#333" stroke="black"/>"##);
    // Goal star.
    let g = scene.goal_pose();
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="18" text-anchor="middle" fill="#c09000">&#9733;</text>"##,
        sx(g.x),
        sy(g.y) + 6.0
    );
    svg.push_str("</svg>\n");
    svg
}
