//! Teacher-rollout distillation dataset: construction from episode logs,
//! plus an on-disk cache (per-episode sample files and an index manifest).

use crate::camgeo::camera_from_pose;
use crate::perception::rasterize_car;
use crate::simkit::{EpisodeLog, Scene};
use crate::student::{normalize, FrameTensor, NormalizationBounds, StudentError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One training sample: an input tensor and the normalized raw (clamped,
/// unquantized) teacher command for the same frame.
#[derive(Debug, Clone)]
pub struct DistillSample {
    pub tensor: FrameTensor,
    /// Normalized target in [-1, 1] per channel.
    pub target: [f64; 3],
    /// Episode the frame came from; the train/validation split keys on it.
    pub episode: u32,
}

#[derive(Debug, Clone)]
pub struct DistillDataset {
    pub samples: Vec<DistillSample>,
    pub n_episodes: u32,
    pub bounds: NormalizationBounds,
    pub input_size: u32,
}

/// Build the dataset from teacher episode logs: one sample per logged
/// frame, with the input re-rendered from the recorded pose and the
/// target set to the normalized clamped raw teacher command.
pub fn distill(
    logs: &[EpisodeLog],
    scene: &Scene,
    input_size: u32,
    bounds: &NormalizationBounds,
) -> DistillDataset {
    let render_episode = |(ep, log): (usize, &EpisodeLog)| -> Vec<DistillSample> {
        let mut out = Vec::with_capacity(log.frames.len());
        for frame in &log.frames {
            let extr = camera_from_pose(&frame.pose, &scene.gimbal);
            let Ok(raster) = rasterize_car(&scene.car, &scene.car_pose, &extr, &scene.intr) else {
                continue;
            };
            let Ok(tensor) = crate::student::render_input(&raster, input_size) else {
                continue;
            };
            let target = normalize(&bounds.clamp(&frame.raw), bounds);
            out.push(DistillSample { tensor, target, episode: ep as u32 });
        }
        out
    };
    #[cfg(feature = "parallel")]
    let per_episode: Vec<Vec<DistillSample>> =
        logs.par_iter().enumerate().map(render_episode).collect();
    #[cfg(not(feature = "parallel"))]
    let per_episode: Vec<Vec<DistillSample>> =
        logs.iter().enumerate().map(render_episode).collect();
    DistillDataset {
        samples: per_episode.into_iter().flatten().collect(),
        n_episodes: logs.len() as u32,
        bounds: *bounds,
        input_size,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    version: u32,
    input_size: u32,
    channels: u32,
    bounds: NormalizationBounds,
    n_episodes: u32,
    /// (file name, episode id, sample count) per chunk.
    files: Vec<(String, u32, u32)>,
}

/// Write the dataset as one binary file per episode plus a manifest.
pub fn save_dataset(dataset: &DistillDataset, dir: &Path) -> Result<(), StudentError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for ep in 0..dataset.n_episodes {
        let samples: Vec<&DistillSample> =
            dataset.samples.iter().filter(|s| s.episode == ep).collect();
        if samples.is_empty() {
            continue;
        }
        let name = format!("ep_{ep:04}.bin");
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
        for s in &samples {
            for t in s.target {
                f.write_all(&t.to_le_bytes())?;
            }
            for &v in &s.tensor.data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        files.push((name, ep, samples.len() as u32));
    }
    let manifest = DatasetManifest {
        version: 1,
        input_size: dataset.input_size,
        channels: 2,
        bounds: dataset.bounds,
        n_episodes: dataset.n_episodes,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| StudentError::WeightFormat(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<DistillDataset, StudentError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| StudentError::WeightFormat(e.to_string()))?;
    if manifest.version != 1 {
        return Err(StudentError::WeightFormat(format!(
            "unsupported dataset version {}",
            manifest.version
        )));
    }
    let plane = (manifest.input_size * manifest.input_size * manifest.channels) as usize;
    let record = 3 * 8 + plane * 4;
    let mut samples = Vec::new();
    for (name, ep, count) in &manifest.files {
        let mut raw = Vec::new();
        std::fs::File::open(dir.join(name))?.read_to_end(&mut raw)?;
        if raw.len() != record * *count as usize {
            return Err(StudentError::WeightFormat(format!("{name}: wrong size")));
        }
        for r in 0..*count as usize {
            let base = r * record;
            let mut target = [0.0f64; 3];
            for (i, t) in target.iter_mut().enumerate() {
                *t = f64::from_le_bytes(raw[base + i * 8..base + i * 8 + 8].try_into().unwrap());
            }
            let mut tensor =
                FrameTensor::new(manifest.input_size, manifest.input_size, manifest.channels);
            for i in 0..plane {
                let off = base + 24 + i * 4;
                tensor.data[i] = f32::from_le_bytes(raw[off..off + 4].try_into().unwrap());
            }
            samples.push(DistillSample { tensor, target, episode: *ep });
        }
    }
    Ok(DistillDataset {
        samples,
        n_episodes: manifest.n_episodes,
        bounds: manifest.bounds,
        input_size: manifest.input_size,
    })
}
