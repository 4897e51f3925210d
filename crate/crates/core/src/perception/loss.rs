//! Analytical evaluator for the mask-splitter training loss.
//!
//! The loss scores a soft front/back prediction against the ground-truth
//! partition of a vehicle mask: per-mask binary cross-entropy, a partition
//! constraint (the two predictions must sum to the original mask), an
//! overlap penalty, and a coverage term for excess and missed area.

use crate::perception::{BinaryMask, PerceptionError, SoftMask, SplitResult};
use serde::{Deserialize, Serialize};

/// Predictions are clamped into [BCE_EPS, 1 - BCE_EPS] before the log,
/// since the cross-entropy is undefined at hard 0/1.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterLossWeights {
    pub w_bce_front: f64,
    pub w_bce_back: f64,
    pub w_partition: f64,
    pub w_overlap: f64,
    pub w_coverage: f64,
}

impl Default for SplitterLossWeights {
    fn default() -> Self {
        Self { w_bce_front: 1.0, w_bce_back: 1.0, w_partition: 1.0, w_overlap: 1.0, w_coverage: 1.0 }
    }
}

/// Per-epoch weight schedule: linear ramp from `start` to `end` over
/// `ramp_epochs`, constant afterwards. The default emphasizes the
/// individual mask terms first, then shifts toward the partition and
/// overlap constraints.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub start: SplitterLossWeights,
    pub end: SplitterLossWeights,
    pub ramp_epochs: u32,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        Self {
            start: SplitterLossWeights {
                w_bce_front: 1.0,
                w_bce_back: 1.0,
                w_partition: 0.1,
                w_overlap: 0.1,
                w_coverage: 0.1,
            },
            end: SplitterLossWeights::default(),
            ramp_epochs: 10,
        }
    }
}

impl WeightSchedule {
    pub fn at(&self, epoch: u32) -> SplitterLossWeights {
        let t = if self.ramp_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / self.ramp_epochs as f64).min(1.0)
        };
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        SplitterLossWeights {
            w_bce_front: lerp(self.start.w_bce_front, self.end.w_bce_front),
            w_bce_back: lerp(self.start.w_bce_back, self.end.w_bce_back),
            w_partition: lerp(self.start.w_partition, self.end.w_partition),
            w_overlap: lerp(self.start.w_overlap, self.end.w_overlap),
            w_coverage: lerp(self.start.w_coverage, self.end.w_coverage),
        }
    }
}

/// Loss components plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterLoss {
    pub bce_front: f64,
    pub bce_back: f64,
    /// Mean absolute deviation of (front + back) from the original mask.
    pub partition: f64,
    /// Mean of front * back.
    pub overlap: f64,
    /// Mean of prediction mass outside the original mask plus original
    /// mask area missed by the union of predictions.
    pub coverage: f64,
    pub total: f64,
}

fn bce(pred: &[f64], target: &BinaryMask) -> f64 {
    let t = target.as_slice();
    let mut acc = 0.0;
    for (&p, &y) in pred.iter().zip(t) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        acc -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    acc / pred.len() as f64
}

pub fn splitter_loss(
    pred_front: &SoftMask,
    pred_back: &SoftMask,
    gt: &SplitResult,
    original: &BinaryMask,
    w: &SplitterLossWeights,
) -> Result<SplitterLoss, PerceptionError> {
    if !pred_front.same_shape_mask(original)
        || !pred_back.same_shape_mask(original)
        || !gt.front.same_shape(original)
        || !gt.back.same_shape(original)
    {
        return Err(PerceptionError::ShapeMismatch);
    }
    let n = pred_front.data.len() as f64;
    let orig = original.as_slice();

    let bce_front = bce(&pred_front.data, &gt.front);
    let bce_back = bce(&pred_back.data, &gt.back);

    let mut partition = 0.0;
    let mut overlap = 0.0;
    let mut coverage = 0.0;
    for i in 0..pred_front.data.len() {
        let pf = pred_front.data[i];
        let pb = pred_back.data[i];
        let o = if orig[i] { 1.0 } else { 0.0 };
        partition += ((pf + pb) - o).abs();
        overlap += pf * pb;
        let union = pf.max(pb);
        coverage += (union - o).max(0.0) + (o - union).max(0.0);
    }
    partition /= n;
    overlap /= n;
    coverage /= n;

    let total = w.w_bce_front * bce_front
        + w.w_bce_back * bce_back
        + w.w_partition * partition
        + w.w_overlap * overlap
        + w.w_coverage * coverage;
    Ok(SplitterLoss { bce_front, bce_back, partition, overlap, coverage, total })
}
