//! Episode log persistence: a CSV of per-frame records plus a JSON
//! summary, both reconstructable into an [`EpisodeLog`]. Floats are
//! written in shortest round-trip form so reruns are byte-identical and
//! parsing recovers exact values.

use crate::camgeo::{ImagePoint, Pose};
use crate::perception::KeypointSet;
use crate::servo::VelocityCommand;
use crate::simkit::{CampaignReport, EpisodeLog, FrameRecord, Outcome, RuleKind};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const EPISODE_CSV_HEADER: &str = "frame,t,x,y,z,yaw,fl_u,fl_v,fr_u,fr_v,br_u,br_v,bl_u,bl_v,err_norm,raw_vx,raw_vy,raw_wz,cmd_vx,cmd_vy,cmd_wz,singular,fallback";

pub fn episode_csv(log: &EpisodeLog) -> String {
    let mut out = String::with_capacity(64 * log.frames.len());
    out.push_str(EPISODE_CSV_HEADER);
    out.push('\n');
    for f in &log.frames {
        let k = &f.kps;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f.frame,
            f.t,
            f.pose.x,
            f.pose.y,
            f.pose.z,
            f.pose.yaw,
            k.fl.u,
            k.fl.v,
            k.fr.u,
            k.fr.v,
            k.br.u,
            k.br.v,
            k.bl.u,
            k.bl.v,
            f.err_norm,
            f.raw.vx,
            f.raw.vy,
            f.raw.wz,
            f.cmd.vx,
            f.cmd.vy,
            f.cmd.wz,
            u8::from(f.singular),
            u8::from(f.used_fallback),
        );
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeSummary {
    start_label: String,
    seed: u64,
    start_pose: Pose,
    desired: KeypointSet,
    outcome: String,
    rule: Option<RuleKind>,
    frames: u32,
    duration_s: f64,
}

pub fn episode_summary_json(log: &EpisodeLog) -> String {
    let summary = EpisodeSummary {
        start_label: log.start_label.clone(),
        seed: log.seed,
        start_pose: log.start_pose,
        desired: log.desired,
        outcome: log.outcome.label(),
        rule: log.rule,
        frames: log.frames.len() as u32,
        duration_s: log.frames.last().map(|f| f.t).unwrap_or(0.0),
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Write `{stem}.csv` and `{stem}.json` into `dir`.
pub fn write_episode(log: &EpisodeLog, dir: &Path, stem: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), episode_csv(log))?;
    std::fs::write(dir.join(format!("{stem}.json")), episode_summary_json(log))?;
    Ok(())
}

fn parse_outcome(label: &str) -> Outcome {
    match label {
        "converged_hard" => Outcome::ConvergedHard,
        "converged_soft" => Outcome::ConvergedSoft,
        "converged_quiet" => Outcome::ConvergedQuiet,
        "timeout" => Outcome::Timeout,
        "lost_target" => Outcome::LostTarget,
        other => Outcome::Error(other.strip_prefix("error:").unwrap_or(other).to_string()),
    }
}

/// Load an episode back from its `{stem}.csv` / `{stem}.json` pair.
pub fn read_episode_csv(dir: &Path, stem: &str) -> std::io::Result<EpisodeLog> {
    let bad = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    let summary: EpisodeSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)
            .map_err(|e| bad(e.to_string()))?;
    let csv = std::fs::read_to_string(dir.join(format!("{stem}.csv")))?;
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| bad("empty csv".into()))?;
    if header != EPISODE_CSV_HEADER {
        return Err(bad("unexpected csv header".into()));
    }
    let mut frames = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 23 {
            return Err(bad(format!("line {}: expected 23 columns", ln + 2)));
        }
        let f = |i: usize| -> Result<f64, std::io::Error> {
            cols[i].parse::<f64>().map_err(|e| bad(format!("line {}: {e}", ln + 2)))
        };
        frames.push(FrameRecord {
            frame: cols[0].parse().map_err(|e| bad(format!("{e}")))?,
            t: f(1)?,
            pose: Pose { x: f(2)?, y: f(3)?, z: f(4)?, yaw: f(5)? },
            kps: KeypointSet {
                fl: ImagePoint::new(f(6)?, f(7)?),
                fr: ImagePoint::new(f(8)?, f(9)?),
                br: ImagePoint::new(f(10)?, f(11)?),
                bl: ImagePoint::new(f(12)?, f(13)?),
            },
            err_norm: f(14)?,
            raw: VelocityCommand { vx: f(15)?, vy: f(16)?, wz: f(17)? },
            cmd: VelocityCommand { vx: f(18)?, vy: f(19)?, wz: f(20)? },
            singular: cols[21] == "1",
            used_fallback: cols[22] == "1",
        });
    }
    Ok(EpisodeLog {
        start_label: summary.start_label,
        seed: summary.seed,
        start_pose: summary.start_pose,
        desired: summary.desired,
        frames,
        outcome: parse_outcome(&summary.outcome),
        rule: summary.rule,
    })
}

/// Load every episode in a logs directory (each `{stem}.csv` with its
/// `{stem}.json` sibling), sorted by file name.
pub fn read_episodes_dir(dir: &Path) -> std::io::Result<Vec<EpisodeLog>> {
    let mut stems: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".csv") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    stems.iter().map(|stem| read_episode_csv(dir, stem)).collect()
}

/// Campaign report CSV in the per-pose aggregate layout
/// (pose, method, runs, converged, distance, time, norm error, IoU).
pub fn report_csv(report: &CampaignReport) -> String {
    let mut out = String::new();
    out.push_str("pose,method,runs,converged,distance_m,time_s,norm_error_px,iou\n");
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.pose, s.method, s.runs, s.converged, s.mean_distance_m, s.mean_time_s,
            s.mean_final_err_px, s.mean_final_iou,
        );
    }
    out
}
