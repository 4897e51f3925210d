//! Multi-pose evaluation campaigns: jittered runs from each start pose,
//! per-run metrics, and Table-style per-pose aggregation. Episodes are
//! independent and may execute in parallel; per-episode seeds derive from
//! the campaign seed, so the report never depends on scheduling.

use crate::evalkit::{final_window_metrics, flight_stats, Quad};
use crate::simkit::{
    derive_seed, run_episode, ControllerKind, EpisodeLog, Scene, SimConfig, StartPose,
    StartPoseSpec,
};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Window over which final metrics are averaged, seconds.
pub const METRIC_WINDOW_SECS: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub pose: String,
    pub run: u32,
    pub seed: u64,
    pub outcome: String,
    pub converged: bool,
    pub frames: u32,
    pub distance_m: f64,
    pub time_s: f64,
    /// Mean error norm / IoU over the final window; absent when the
    /// episode ended before a full window elapsed.
    pub final_err_px: Option<f64>,
    pub final_iou: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSummary {
    pub pose: String,
    pub method: String,
    pub runs: u32,
    pub converged: u32,
    pub mean_distance_m: f64,
    pub mean_time_s: f64,
    pub mean_final_err_px: f64,
    pub mean_final_iou: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignReport {
    pub method: String,
    pub seed: u64,
    pub runs_per_pose: u32,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<PoseSummary>,
    /// Retained episode logs, ordered like `records`.
    #[serde(skip)]
    pub logs: Vec<EpisodeLog>,
}

fn run_record(pose: StartPose, run: u32, seed: u64, log: &EpisodeLog) -> RunRecord {
    let (distance_m, time_s) = flight_stats(log);
    let metrics = final_window_metrics(log, &Quad::from(&log.desired), METRIC_WINDOW_SECS).ok();
    RunRecord {
        pose: pose.label().to_string(),
        run,
        seed,
        outcome: log.outcome.label(),
        converged: log.outcome.converged(),
        frames: log.frames.len() as u32,
        distance_m,
        time_s,
        final_err_px: metrics.map(|m| m.0),
        final_iou: metrics.map(|m| m.1),
    }
}

/// Run `runs_per_pose` jittered episodes from each listed start pose.
/// The controller factory builds one controller per episode. Per-run
/// outcomes are recorded even when episodes fail; the campaign itself
/// never aborts.
pub fn run_campaign<F>(
    scene: &Scene,
    poses: &[StartPose],
    runs_per_pose: u32,
    factory: F,
    sim: &SimConfig,
    jitter: (f64, f64),
    seed: u64,
) -> CampaignReport
where
    F: Fn() -> ControllerKind + Sync,
{
    let method = factory().name().to_string();
    let jobs: Vec<(usize, StartPose, u32)> = poses
        .iter()
        .enumerate()
        .flat_map(|(pi, &p)| (0..runs_per_pose).map(move |r| (pi, p, r)))
        .collect();

    let run_one = |&(pi, pose, run): &(usize, StartPose, u32)| -> (usize, u32, RunRecord, EpisodeLog) {
        let ep_seed = derive_seed(seed, pi as u64, run as u64);
        let spec = StartPoseSpec { label: pose, jitter_pos: jitter.0, jitter_yaw: jitter.1 };
        let mut controller = factory();
        let log = run_episode(scene, &spec, &mut controller, sim, ep_seed);
        (pi, run, run_record(pose, run, ep_seed, &log), log)
    };

    #[cfg(feature = "parallel")]
    let mut results: Vec<(usize, u32, RunRecord, EpisodeLog)> =
        jobs.par_iter().map(run_one).collect();
    #[cfg(not(feature = "parallel"))]
    let mut results: Vec<(usize, u32, RunRecord, EpisodeLog)> = jobs.iter().map(run_one).collect();

    // Aggregation is order-independent: sort by (pose, run).
    results.sort_by_key(|(pi, run, _, _)| (*pi, *run));
    let records: Vec<RunRecord> = results.iter().map(|(_, _, r, _)| r.clone()).collect();
    let logs: Vec<EpisodeLog> = results.into_iter().map(|(_, _, _, l)| l).collect();

    let summaries = poses
        .iter()
        .map(|&pose| {
            let rows: Vec<&RunRecord> =
                records.iter().filter(|r| r.pose == pose.label()).collect();
            let n = rows.len().max(1) as f64;
            let with_metrics: Vec<&RunRecord> =
                rows.iter().copied().filter(|r| r.final_err_px.is_some()).collect();
            let nm = with_metrics.len().max(1) as f64;
            PoseSummary {
                pose: pose.label().to_string(),
                method: method.clone(),
                runs: rows.len() as u32,
                converged: rows.iter().filter(|r| r.converged).count() as u32,
                mean_distance_m: rows.iter().map(|r| r.distance_m).sum::<f64>() / n,
                mean_time_s: rows.iter().map(|r| r.time_s).sum::<f64>() / n,
                mean_final_err_px: with_metrics
                    .iter()
                    .map(|r| r.final_err_px.unwrap())
                    .sum::<f64>()
                    / nm,
                mean_final_iou: with_metrics.iter().map(|r| r.final_iou.unwrap()).sum::<f64>()
                    / nm,
            }
        })
        .collect();

    CampaignReport { method, seed, runs_per_pose, records, summaries, logs }
}
