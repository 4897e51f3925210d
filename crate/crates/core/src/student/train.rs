//! Distillation training loop: per-epoch augmentation, Adam, validation
//! on held-out episodes, and early stopping on the validation loss.

use crate::student::layers::Elem;
use crate::student::{augment, Adam, ArchSpec, DistillDataset, StudentError, StudentNet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Early-stopping patience, epochs without improvement.
    pub patience: u32,
    /// Minimum validation-loss improvement that resets the patience.
    pub min_delta: f64,
    /// Samples per original frame each epoch (1 original + rest augmented).
    pub augment_factor: u32,
    pub max_epochs: u32,
    /// Fraction of episodes held out for validation.
    pub val_fraction: f64,
    /// Momentum of the batch-norm running statistics (0 freezes them).
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 32,
            patience: 3,
            min_delta: 1e-4,
            augment_factor: 5,
            max_epochs: 30,
            val_fraction: 0.1,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_section(t: &crate::config::TrainSection, seed: u64) -> Self {
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            patience: t.patience,
            min_delta: t.min_delta,
            augment_factor: t.augment_factor,
            max_epochs: t.max_epochs,
            val_fraction: t.val_fraction,
            bn_momentum: 0.1,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Episode ids held out for validation.
    pub val_episodes: Vec<u32>,
}

/// Mean squared error over a batch of 3-channel outputs, accumulated in
/// f64 regardless of the compute type.
pub fn mse_loss<T: Elem>(out: &[T], targets: &[T]) -> f64 {
    debug_assert_eq!(out.len(), targets.len());
    let n = out.len() as f64;
    out.iter()
        .zip(targets)
        .map(|(y, t)| {
            let d = y.to_f64() - t.to_f64();
            d * d
        })
        .sum::<f64>()
        / n
}

/// Gradient of [`mse_loss`] with respect to the outputs.
pub fn mse_grad<T: Elem>(out: &[T], targets: &[T]) -> Vec<T> {
    let scale = T::from_f64(2.0 / out.len() as f64);
    out.iter().zip(targets).map(|(&y, &t)| scale * (y - t)).collect()
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xd1b54a32d192ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z ^ (z >> 31)
}

/// Split episode ids into train and validation sets (by episode, so no
/// temporal leakage between the two).
pub fn split_episodes(n_episodes: u32, val_fraction: f64, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let mut ids: Vec<u32> = (0..n_episodes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5e17, 0));
    ids.shuffle(&mut rng);
    if n_episodes < 2 {
        return (ids.clone(), ids);
    }
    let n_val = ((n_episodes as f64 * val_fraction).round() as usize).clamp(1, ids.len() - 1);
    let (val, tr) = ids.split_at(n_val);
    let mut val = val.to_vec();
    let mut tr = tr.to_vec();
    val.sort_unstable();
    tr.sort_unstable();
    (tr, val)
}

/// Train a student on a distillation dataset from freshly initialized
/// weights. Each epoch emits `augment_factor` samples per original
/// training frame (one original, the rest augmented with fresh per-epoch
/// noise), monitors the validation loss on held-out episodes, and stops
/// early after `patience` epochs without a `min_delta` improvement.
/// Returns the weights of the best validation epoch.
///
/// Production training runs in f32; the f64 instantiation backs the
/// gradient checks and exact small-scale tests.
pub fn train(
    dataset: &DistillDataset,
    arch: ArchSpec,
    cfg: &TrainConfig,
) -> Result<(StudentNet<f32>, TrainHistory), StudentError> {
    arch.validate()?;
    let net = StudentNet::<f32>::init(arch, mix(cfg.seed, 0x11e7, 1))?;
    train_from(dataset, net, cfg)
}

/// Continue training from existing weights (the second-stage schedule
/// hook: pretrain in simulation, then fine-tune).
pub fn train_from(
    dataset: &DistillDataset,
    net: StudentNet<f32>,
    cfg: &TrainConfig,
) -> Result<(StudentNet<f32>, TrainHistory), StudentError> {
    if dataset.samples.is_empty() {
        return Err(StudentError::EmptyDataset);
    }
    let (train_eps, val_eps) = split_episodes(dataset.n_episodes, cfg.val_fraction, cfg.seed);
    let in_train: Vec<usize> = dataset
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| train_eps.contains(&s.episode))
        .map(|(i, _)| i)
        .collect();
    let in_val: Vec<usize> = dataset
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| val_eps.contains(&s.episode))
        .map(|(i, _)| i)
        .collect();
    if in_train.is_empty() || in_val.is_empty() {
        return Err(StudentError::EmptyDataset);
    }

    let mut net = net;
    for bn in &mut net.bn {
        bn.momentum = cfg.bn_momentum;
    }
    let input_len = net.input_len();
    let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let mut opt = Adam::new(cfg.lr, &shapes);

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        val_episodes: val_eps.clone(),
    };
    let mut best_net = net.clone();
    let mut streak = 0u32;

    for epoch in 0..cfg.max_epochs {
        // Sample plan: (dataset index, augmentation id), shuffled.
        let mut plan: Vec<(usize, u32)> = in_train
            .iter()
            .flat_map(|&i| (0..cfg.augment_factor).map(move |a| (i, a)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0xe90c, epoch as u64));
        plan.shuffle(&mut rng);

        let mut train_loss_acc = 0.0;
        let mut train_count = 0usize;
        for batch in plan.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue; // batch statistics need at least two samples
            }
            let n = batch.len();
            let mut x = vec![0.0f32; n * input_len];
            let mut targets = vec![0.0f32; n * 3];
            for (bi, &(si, aug)) in batch.iter().enumerate() {
                let s = &dataset.samples[si];
                let tensor = if aug == 0 {
                    s.tensor.clone()
                } else {
                    let mut arng = ChaCha8Rng::seed_from_u64(mix(
                        cfg.seed,
                        (epoch as u64) << 32 | si as u64,
                        aug as u64,
                    ));
                    augment(&s.tensor, &mut arng)
                };
                x[bi * input_len..(bi + 1) * input_len].copy_from_slice(&tensor.data);
                for j in 0..3 {
                    targets[bi * 3 + j] = s.target[j] as f32;
                }
            }
            let cache = net.forward_train(&x, n);
            let loss = mse_loss(&cache.out, &targets);
            let dout = mse_grad(&cache.out, &targets);
            let grads = net.backward(&cache, &dout);
            let mut params = net.params_mut();
            opt.step(&mut params, &grads);
            train_loss_acc += loss * n as f64;
            train_count += n;
        }
        let train_loss = train_loss_acc / train_count.max(1) as f64;

        let val_loss = evaluate(&mut net, dataset, &in_val, cfg.batch_size);
        history.epochs.push(EpochStats { epoch, train_loss, val_loss });

        if val_loss < history.best_val_loss - cfg.min_delta {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_net = net.clone();
            streak = 0;
        } else {
            streak += 1;
            if streak >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best_net, history))
}

/// Mean validation loss over original (non-augmented) frames.
pub fn evaluate(
    net: &mut StudentNet<f32>,
    dataset: &DistillDataset,
    indices: &[usize],
    batch: usize,
) -> f64 {
    let input_len = net.input_len();
    let mut acc = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(batch.max(1)) {
        let n = chunk.len();
        let mut x = vec![0.0f32; n * input_len];
        let mut targets = vec![0.0f32; n * 3];
        for (bi, &si) in chunk.iter().enumerate() {
            let s = &dataset.samples[si];
            x[bi * input_len..(bi + 1) * input_len].copy_from_slice(&s.tensor.data);
            for j in 0..3 {
                targets[bi * 3 + j] = s.target[j] as f32;
            }
        }
        let out = net.forward_eval(&x, n);
        acc += mse_loss(&out, &targets) * n as f64;
        count += n;
    }
    acc / count.max(1) as f64
}
