//! Evaluation metrics: pixel error norms, quad IoU, flight statistics,
//! final-window aggregation, and the timing benchmark.

mod iou;
mod timing;

pub use iou::{clip_convex, polygon_area, quad_iou};
pub use timing::{benchmark_controllers, timing_benchmark, TimingReport, TimingRow};

use crate::camgeo::ImagePoint;
use crate::perception::KeypointSet;
use crate::simkit::EpisodeLog;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("quad has (near-)zero area")]
    DegenerateQuad,
    #[error("episode shorter than the metric window")]
    EpisodeTooShort,
}

/// Four ordered image points (from a keypoint set).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad(pub [ImagePoint; 4]);

impl From<&KeypointSet> for Quad {
    fn from(k: &KeypointSet) -> Self {
        Quad(k.points())
    }
}

/// L2 norm of the stacked coordinate differences between two quads in
/// matching order.
pub fn error_norm(current: &Quad, desired: &Quad) -> f64 {
    let mut acc = 0.0;
    for (a, b) in current.0.iter().zip(&desired.0) {
        acc += (a.u - b.u) * (a.u - b.u) + (a.v - b.v) * (a.v - b.v);
    }
    acc.sqrt()
}

/// Mean error norm and IoU over the final window of an episode
/// (frames with `t >= t_end - window`, both endpoints included).
pub fn final_window_metrics(
    log: &EpisodeLog,
    desired: &Quad,
    window_secs: f64,
) -> Result<(f64, f64), EvalError> {
    let Some(last) = log.frames.last() else {
        return Err(EvalError::EpisodeTooShort);
    };
    let t0 = log.frames[0].t;
    if last.t - t0 < window_secs {
        return Err(EvalError::EpisodeTooShort);
    }
    let cutoff = last.t - window_secs;
    let mut err_acc = 0.0;
    let mut iou_acc = 0.0;
    let mut n = 0usize;
    for f in log.frames.iter().filter(|f| f.t >= cutoff) {
        err_acc += error_norm(&Quad::from(&f.kps), desired);
        iou_acc += quad_iou(&Quad::from(&f.kps), desired).unwrap_or(0.0);
        n += 1;
    }
    Ok((err_acc / n as f64, iou_acc / n as f64))
}

/// Total planar distance traveled and elapsed time of an episode.
pub fn flight_stats(log: &EpisodeLog) -> (f64, f64) {
    let mut dist = 0.0;
    for pair in log.frames.windows(2) {
        let (a, b) = (&pair[0].pose, &pair[1].pose);
        dist += ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    }
    let dur = match (log.frames.first(), log.frames.last()) {
        (Some(f), Some(l)) => l.t - f.t,
        _ => 0.0,
    };
    (dist, dur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::Pose;
    use crate::servo::VelocityCommand;
    use crate::simkit::{FrameRecord, Outcome};

    fn quad(pts: [(f64, f64); 4]) -> Quad {
        Quad(pts.map(|(u, v)| ImagePoint::new(u, v)))
    }

    fn kps(q: &Quad) -> KeypointSet {
        KeypointSet { fl: q.0[0], fr: q.0[1], br: q.0[2], bl: q.0[3] }
    }

    fn make_log(frames: Vec<FrameRecord>) -> EpisodeLog {
        EpisodeLog {
            start_label: "left".into(),
            seed: 0,
            start_pose: Pose::new(0.0, 0.0, 1.7, 0.0),
            desired: kps(&quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])),
            frames,
            outcome: Outcome::ConvergedHard,
            rule: None,
        }
    }

    fn frame_at(t: f64, pose: Pose, q: &Quad) -> FrameRecord {
        FrameRecord {
            frame: (t * 10.0) as u32,
            t,
            pose,
            kps: kps(q),
            err_norm: 0.0,
            raw: VelocityCommand::ZERO,
            cmd: VelocityCommand::ZERO,
            singular: false,
            used_fallback: false,
        }
    }

    #[test]
    fn error_norm_examples() {
        let a = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(error_norm(&a, &a), 0.0);
        let shifted = quad([(3.0, 4.0), (4.0, 4.0), (4.0, 5.0), (3.0, 5.0)]);
        assert!((error_norm(&a, &shifted) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn error_norm_matches_scalar_oracle() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut pts = [[0.0f64; 2]; 8];
            for p in &mut pts {
                p[0] = rng.random_range(-100.0..100.0);
                p[1] = rng.random_range(-100.0..100.0);
            }
            let a = quad([
                (pts[0][0], pts[0][1]),
                (pts[1][0], pts[1][1]),
                (pts[2][0], pts[2][1]),
                (pts[3][0], pts[3][1]),
            ]);
            let b = quad([
                (pts[4][0], pts[4][1]),
                (pts[5][0], pts[5][1]),
                (pts[6][0], pts[6][1]),
                (pts[7][0], pts[7][1]),
            ]);
            let mut acc = 0.0;
            for i in 0..4 {
                acc += (a.0[i].u - b.0[i].u).powi(2) + (a.0[i].v - b.0[i].v).powi(2);
            }
            assert!((error_norm(&a, &b) - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn error_norm_is_a_metric() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rand_quad = |rng: &mut rand_chacha::ChaCha8Rng| {
            quad(std::array::from_fn(|_| {
                (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))
            }))
        };
        for _ in 0..100 {
            let a = rand_quad(&mut rng);
            let b = rand_quad(&mut rng);
            let c = rand_quad(&mut rng);
            assert!(error_norm(&a, &b) >= 0.0);
            assert_eq!(error_norm(&a, &a), 0.0);
            assert!((error_norm(&a, &b) - error_norm(&b, &a)).abs() < 1e-12);
            assert!(error_norm(&a, &c) <= error_norm(&a, &b) + error_norm(&b, &c) + 1e-12);
        }
    }

    #[test]
    fn constant_window_mean_is_the_constant() {
        let q = quad([(10.0, 10.0), (20.0, 10.0), (20.0, 20.0), (10.0, 20.0)]);
        let desired = quad([(13.0, 14.0), (23.0, 14.0), (23.0, 24.0), (13.0, 24.0)]);
        let frames: Vec<FrameRecord> =
            (0..50).map(|i| frame_at(i as f64 * 0.1, Pose::new(0.0, 0.0, 1.7, 0.0), &q)).collect();
        let log = make_log(frames);
        let (err, iou) = final_window_metrics(&log, &desired, 3.0).unwrap();
        assert!((err - error_norm(&q, &desired)).abs() < 1e-12);
        assert!((iou - quad_iou(&q, &desired).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn window_boundary_is_inclusive() {
        // Distinct quads inside and outside the window; the frame at
        // exactly t_end - window is included.
        let inner = quad([(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        let outer = quad([(100.0, 0.0), (102.0, 0.0), (102.0, 2.0), (100.0, 2.0)]);
        let mut frames = Vec::new();
        for i in 0..=50 {
            let t = i as f64 * 0.1;
            let q = if t >= 2.0 { &inner } else { &outer };
            frames.push(frame_at(t, Pose::new(0.0, 0.0, 1.7, 0.0), q));
        }
        let log = make_log(frames);
        // Window [2.0, 5.0]: 31 frames, all `inner`.
        let desired = inner;
        let (err, _) = final_window_metrics(&log, &desired, 3.0).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn short_episode_is_error() {
        let q = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let frames: Vec<FrameRecord> =
            (0..10).map(|i| frame_at(i as f64 * 0.1, Pose::new(0.0, 0.0, 1.7, 0.0), &q)).collect();
        let log = make_log(frames);
        assert!(matches!(
            final_window_metrics(&log, &q, 3.0),
            Err(EvalError::EpisodeTooShort)
        ));
    }

    #[test]
    fn flight_stats_examples() {
        let q = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        // Stationary.
        let frames: Vec<FrameRecord> =
            (0..20).map(|i| frame_at(i as f64 * 0.1, Pose::new(1.0, 2.0, 1.7, 0.0), &q)).collect();
        let (d, t) = flight_stats(&make_log(frames));
        assert_eq!(d, 0.0);
        assert!((t - 1.9).abs() < 1e-12);
        // Straight 1 m/s for 5 s at 10 Hz.
        let frames: Vec<FrameRecord> = (0..=50)
            .map(|i| frame_at(i as f64 * 0.1, Pose::new(i as f64 * 0.1, 0.0, 1.7, 0.0), &q))
            .collect();
        let (d, t) = flight_stats(&make_log(frames));
        assert!((d - 5.0).abs() < 1e-9);
        assert!((t - 5.0).abs() < 1e-12);
    }

    #[test]
    fn random_walk_distance_matches_cumsum_oracle() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let q = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let mut frames = Vec::new();
        let (mut x, mut y) = (0.0, 0.0);
        let mut oracle = 0.0;
        let mut prev = (x, y);
        for i in 0..100 {
            x += rng.random_range(-0.1..0.1);
            y += rng.random_range(-0.1..0.1);
            frames.push(frame_at(i as f64 * 0.1, Pose::new(x, y, 1.7, 0.0), &q));
            if i > 0 {
                oracle += ((x - prev.0).powi(2) + (y - prev.1).powi(2)).sqrt();
            }
            prev = (x, y);
        }
        let (d, _) = flight_stats(&make_log(frames));
        assert!((d - oracle).abs() < 1e-9);
    }
}
