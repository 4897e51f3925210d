//! Command-line runner: teacher campaigns, distillation, student
//! campaigns, timing benchmarks, and mask labeling.
//!
//! Every subcommand is deterministic given (config, seed): rerunning with
//! an identical manifest reproduces all non-timing artifacts byte for
//! byte. No subcommand writes outside its --out directory.

mod plot;

use clap::{Args, Parser, Subcommand};
use nser_core::camgeo::ImagePoint;
use nser_core::config::AppConfig;
use nser_core::evalkit::benchmark_controllers;
use nser_core::perception::{centroid, read_pgm, split_mask, write_pgm};
use nser_core::simkit::{
    read_episodes_dir, report_csv, run_campaign, write_episode, CampaignReport, ControllerKind,
    Scene, SimConfig, StartPose, StudentPilot,
};
use nser_core::student::{
    distill, load_weights, save_dataset, save_weights, train, train_from, ArchSpec, InferenceNet,
    NormalizationBounds, TrainConfig,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUN: u8 = 3;
const EXIT_WEIGHTS: u8 = 4;

#[derive(Parser)]
#[command(name = "nser", version, about = "Visual-servoing teacher/student evaluation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Campaign seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analytical-controller campaign and write logs + report.
    Teacher {
        #[command(flatten)]
        common: CommonArgs,
        /// Runs per start pose.
        #[arg(long, default_value_t = 20)]
        runs: u32,
        /// Restrict to a single start pose label (e.g. down-left).
        #[arg(long)]
        pose: Option<String>,
    },
    /// Build the distillation dataset from teacher logs and train the
    /// student network.
    Distill {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory containing teacher episode logs (the `logs/`
        /// directory of a teacher campaign output).
        #[arg(long)]
        logs: PathBuf,
        /// Continue training from an existing weights file.
        #[arg(long)]
        init_weights: Option<PathBuf>,
        /// Also write the rendered dataset cache into OUT/dataset.
        #[arg(long, default_value_t = false)]
        cache_dataset: bool,
    },
    /// Run the learned-controller campaign with the quiet termination
    /// rule; same artifact layout as `teacher`.
    Student {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained weights file.
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 20)]
        runs: u32,
        #[arg(long)]
        pose: Option<String>,
    },
    /// Benchmark the analytical pipeline against the student forward pass.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        weights: PathBuf,
        /// Timed trials per evaluator.
        #[arg(long, default_value_t = 30)]
        trials: u32,
        /// Frames in the benchmark sequence.
        #[arg(long, default_value_t = 40)]
        frames: u32,
    },
    /// Split an external mask into front/back parts around a clicked
    /// front point.
    Label {
        /// Input mask (PGM, P5).
        #[arg(long)]
        mask: PathBuf,
        /// Click marking the front of the vehicle, pixels.
        #[arg(long)]
        u: f64,
        #[arg(long)]
        v: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

struct CmdError {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> CmdError {
    CmdError { code, message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Teacher { common, runs, pose } => cmd_teacher(&common, runs, pose.as_deref()),
        Command::Distill { common, logs, init_weights, cache_dataset } => {
            cmd_distill(&common, &logs, init_weights.as_deref(), cache_dataset)
        }
        Command::Student { common, weights, runs, pose } => {
            cmd_student(&common, &weights, runs, pose.as_deref())
        }
        Command::Bench { common, weights, trials, frames } => {
            cmd_bench(&common, &weights, trials, frames)
        }
        Command::Label { mask, u, v, out } => cmd_label(&mask, u, v, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Cap worker threads (campaign episode parallelism) via NSER_THREADS.
fn init_threads() {
    if let Ok(v) = std::env::var("NSER_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<(AppConfig, String), CmdError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| fail(EXIT_CONFIG, format!("cannot read {}: {e}", p.display())))?;
            let cfg =
                AppConfig::load(p).map_err(|e| fail(EXIT_CONFIG, format!("bad config: {e}")))?;
            Ok((cfg, text))
        }
        None => Ok((AppConfig::default(), String::new())),
    }
}

/// FNV-1a over the config text, recorded in the manifest.
fn content_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    config_path: Option<String>,
    config_hash: String,
    seed: u64,
}

fn write_manifest(common: &CommonArgs, subcommand: &str, config_text: &str) -> Result<(), CmdError> {
    let manifest = RunManifest {
        tool: "nser",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        config_hash: content_hash(config_text),
        seed: common.seed,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::create_dir_all(&common.out)
        .and_then(|_| std::fs::write(common.out.join("manifest.json"), json))
        .map_err(|e| fail(EXIT_RUN, format!("cannot write manifest: {e}")))
}

fn sim_config(cfg: &AppConfig) -> SimConfig {
    SimConfig {
        dt: cfg.sim.dt,
        k_v: cfg.control.k_v,
        k_w: cfg.control.k_w,
        altitude: cfg.scene.altitude,
        max_duration: cfg.sim.max_duration,
    }
}

fn select_poses(pose: Option<&str>) -> Result<Vec<StartPose>, CmdError> {
    match pose {
        None => Ok(StartPose::ALL.to_vec()),
        Some(label) => StartPose::parse(label)
            .map(|p| vec![p])
            .ok_or_else(|| fail(EXIT_CONFIG, format!("unknown pose label {label}"))),
    }
}

fn write_campaign_artifacts(
    out: &Path,
    scene: &Scene,
    report: &CampaignReport,
) -> Result<(), CmdError> {
    let werr = |e: std::io::Error| fail(EXIT_RUN, format!("cannot write artifacts: {e}"));
    std::fs::create_dir_all(out.join("logs")).map_err(werr)?;
    for (record, log) in report.records.iter().zip(&report.logs) {
        let stem = format!("{}_{:03}", record.pose, record.run);
        write_episode(log, &out.join("logs"), &stem).map_err(werr)?;
    }
    std::fs::write(out.join("report.csv"), report_csv(report)).map_err(werr)?;
    let summary = serde_json::to_string_pretty(&report.records).expect("records serialize");
    std::fs::write(out.join("summary.json"), summary).map_err(werr)?;
    std::fs::create_dir_all(out.join("plots")).map_err(werr)?;
    std::fs::write(
        out.join("plots").join("trajectories.svg"),
        plot::trajectories_svg(scene, &report.logs),
    )
    .map_err(werr)?;
    Ok(())
}

fn print_campaign(report: &CampaignReport) {
    let converged = report.records.iter().filter(|r| r.converged).count();
    println!("{} campaign: {}/{} converged", report.method, converged, report.records.len());
    for s in &report.summaries {
        println!(
            "  {:12} {}/{} err {:7.2} px  iou {:.3}  dist {:.2} m  time {:.1} s",
            s.pose, s.converged, s.runs, s.mean_final_err_px, s.mean_final_iou,
            s.mean_distance_m, s.mean_time_s
        );
    }
}

fn cmd_teacher(common: &CommonArgs, runs: u32, pose: Option<&str>) -> Result<(), CmdError> {
    let (cfg, text) = load_config(common.config.as_deref())?;
    let poses = select_poses(pose)?;
    write_manifest(common, "teacher", &text)?;
    let scene = Scene::from_config(&cfg);
    let report = run_campaign(
        &scene,
        &poses,
        runs,
        || ControllerKind::Teacher(cfg.control_config()),
        &sim_config(&cfg),
        (cfg.sim.jitter_pos, cfg.sim.jitter_yaw_deg.to_radians()),
        common.seed,
    );
    write_campaign_artifacts(&common.out, &scene, &report)?;
    print_campaign(&report);
    Ok(())
}

fn resolve_bounds(
    cfg: &AppConfig,
    logs: &[nser_core::simkit::EpisodeLog],
) -> Result<NormalizationBounds, CmdError> {
    match cfg.train.bounds.as_str() {
        "sim" => Ok(NormalizationBounds::SIM),
        "real" => Ok(NormalizationBounds::REAL),
        _ => NormalizationBounds::from_commands_quantile(
            logs.iter().flat_map(|l| l.frames.iter().map(|f| &f.raw)),
            cfg.train.bounds_quantile,
        )
        .ok_or_else(|| fail(EXIT_RUN, "no commands in logs to calibrate bounds")),
    }
}

fn cmd_distill(
    common: &CommonArgs,
    logs_dir: &Path,
    init_weights: Option<&Path>,
    cache_dataset: bool,
) -> Result<(), CmdError> {
    let (cfg, text) = load_config(common.config.as_deref())?;
    write_manifest(common, "distill", &text)?;
    let logs = read_episodes_dir(logs_dir).map_err(|e| {
        fail(EXIT_RUN, format!("cannot read logs from {}: {e}", logs_dir.display()))
    })?;
    if logs.is_empty() {
        return Err(fail(EXIT_RUN, "no episode logs found"));
    }
    let scene = Scene::from_config(&cfg);
    let bounds = resolve_bounds(&cfg, &logs)?;
    let dataset = distill(&logs, &scene, cfg.train.input_size, &bounds);
    println!(
        "dataset: {} samples from {} episodes; bounds min {:?} max {:?}",
        dataset.samples.len(),
        dataset.n_episodes,
        bounds.min,
        bounds.max
    );
    if cache_dataset {
        save_dataset(&dataset, &common.out.join("dataset"))
            .map_err(|e| fail(EXIT_RUN, format!("cannot cache dataset: {e}")))?;
    }

    let tcfg = TrainConfig::from_section(&cfg.train, common.seed);
    let started = std::time::Instant::now();
    let (net, history) = match init_weights {
        Some(p) => {
            let (init, _) = load_weights(p)
                .map_err(|e| fail(EXIT_WEIGHTS, format!("cannot load init weights: {e}")))?;
            train_from(&dataset, init, &tcfg)
                .map_err(|e| fail(EXIT_RUN, format!("training failed: {e}")))?
        }
        None => train(&dataset, ArchSpec::desk(cfg.train.input_size as usize), &tcfg)
            .map_err(|e| fail(EXIT_RUN, format!("training failed: {e}")))?,
    };
    println!(
        "trained {} epochs in {:.0} s; best val loss {:.6} at epoch {}",
        history.epochs.len(),
        started.elapsed().as_secs_f64(),
        history.best_val_loss,
        history.best_epoch
    );
    save_weights(&net, &bounds, &common.out.join("student.nsw"))
        .map_err(|e| fail(EXIT_RUN, format!("cannot save weights: {e}")))?;
    let hist_json = serde_json::to_string_pretty(&history).expect("history serializes");
    std::fs::write(common.out.join("history.json"), hist_json)
        .map_err(|e| fail(EXIT_RUN, format!("cannot write history: {e}")))?;
    Ok(())
}

fn cmd_student(
    common: &CommonArgs,
    weights: &Path,
    runs: u32,
    pose: Option<&str>,
) -> Result<(), CmdError> {
    let (cfg, text) = load_config(common.config.as_deref())?;
    let poses = select_poses(pose)?;
    let (net, bounds) = load_weights(weights)
        .map_err(|e| fail(EXIT_WEIGHTS, format!("cannot load weights: {e}")))?;
    write_manifest(common, "student", &text)?;
    let scene = Scene::from_config(&cfg);
    let inference = InferenceNet::from_trained(&net);
    let input_size = net.arch.input_size as u32;
    let report = run_campaign(
        &scene,
        &poses,
        runs,
        || {
            ControllerKind::Student(StudentPilot {
                net: inference.clone(),
                bounds,
                command_clamp: cfg.control.command_clamp,
                quantize: cfg.control.quantize,
                input_size,
            })
        },
        &sim_config(&cfg),
        (cfg.sim.jitter_pos, cfg.sim.jitter_yaw_deg.to_radians()),
        common.seed,
    );
    write_campaign_artifacts(&common.out, &scene, &report)?;
    print_campaign(&report);
    Ok(())
}

fn cmd_bench(common: &CommonArgs, weights: &Path, trials: u32, frames: u32) -> Result<(), CmdError> {
    let (cfg, text) = load_config(common.config.as_deref())?;
    let (net, bounds) = load_weights(weights)
        .map_err(|e| fail(EXIT_WEIGHTS, format!("cannot load weights: {e}")))?;
    write_manifest(common, "bench", &text)?;
    let scene = Scene::from_config(&cfg);
    let mut inference = InferenceNet::from_trained(&net);
    let report = benchmark_controllers(
        &scene,
        &cfg.control_config(),
        &mut inference,
        &bounds,
        net.arch.input_size as u32,
        frames as usize,
        trials,
        common.seed,
    )
    .map_err(|e| fail(EXIT_RUN, format!("benchmark failed: {e}")))?;
    let mut csv = format!(
        "evaluator,avg_ms,std_ms,median_ms,min_ms,max_ms,fps\n# trials={} frames={}\n",
        report.trials, report.frames_per_trial
    );
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2}\n",
            row.evaluator, row.avg_ms, row.std_ms, row.median_ms, row.min_ms, row.max_ms, row.fps
        ));
    }
    std::fs::write(common.out.join("timing.csv"), &csv)
        .map_err(|e| fail(EXIT_RUN, format!("cannot write timing report: {e}")))?;
    println!(
        "timing over {} trials x {} frames (published reference: analytical 48.30 fps, student 540.8 fps):",
        report.trials, report.frames_per_trial
    );
    print!("{csv}");
    Ok(())
}

fn cmd_label(mask_path: &Path, u: f64, v: f64, out: &Path) -> Result<(), CmdError> {
    let mask = read_pgm(mask_path)
        .map_err(|e| fail(EXIT_CONFIG, format!("cannot read {}: {e}", mask_path.display())))?;
    let c = centroid(&mask).map_err(|e| fail(EXIT_CONFIG, format!("bad mask: {e}")))?;
    let split = split_mask(&mask, &c, &ImagePoint::new(u, v))
        .map_err(|e| fail(EXIT_CONFIG, format!("cannot split: {e}")))?;
    std::fs::create_dir_all(out).map_err(|e| fail(EXIT_RUN, format!("{e}")))?;
    write_pgm(&split.front, &out.join("front.pgm"))
        .and_then(|_| write_pgm(&split.back, &out.join("back.pgm")))
        .map_err(|e| fail(EXIT_RUN, format!("cannot write outputs: {e}")))?;
    // Partition sanity on the written artifacts.
    let front = read_pgm(&out.join("front.pgm")).map_err(|e| fail(EXIT_RUN, format!("{e}")))?;
    let back = read_pgm(&out.join("back.pgm")).map_err(|e| fail(EXIT_RUN, format!("{e}")))?;
    if !front.partitions_with(&back, &mask) {
        return Err(fail(EXIT_RUN, "front/back outputs do not partition the mask"));
    }
    println!(
        "split {} px into front {} px / back {} px (centroid {:.1},{:.1})",
        mask.count(),
        front.count(),
        back.count(),
        c.u,
        c.v
    );
    Ok(())
}
