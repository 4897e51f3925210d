//! Command-label normalization between actuator units and the network's
//! bounded output range.

use crate::servo::VelocityCommand;
use serde::{Deserialize, Serialize};

/// Per-channel (vx, vy, wz) command bounds observed on evaluation runs;
/// labels are mapped affinely into [-1, 1] between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl NormalizationBounds {
    /// Bounds observed in the digital-twin environment.
    pub const SIM: NormalizationBounds =
        NormalizationBounds { min: [-24.0, -9.0, -27.0], max: [16.0, 9.0, 40.0] };

    /// Bounds observed on real-world flights.
    pub const REAL: NormalizationBounds =
        NormalizationBounds { min: [-30.0, -30.0, -40.0], max: [30.0, 30.0, 40.0] };

    pub fn valid(&self) -> bool {
        self.min.iter().zip(&self.max).all(|(a, b)| a < b)
    }

    /// Calibrate bounds from observed commands, the way the published
    /// ranges were obtained from evaluation runs: channel-wise min/max,
    /// rounded outward to whole actuator units.
    pub fn from_commands<'a>(cmds: impl Iterator<Item = &'a VelocityCommand>) -> Option<Self> {
        Self::from_commands_quantile(cmds, 1.0)
    }

    /// Quantile variant of [`Self::from_commands`]: bounds cover the
    /// central `q` mass of each channel. Short start-of-flight transients
    /// would otherwise stretch the bounds so far that near-goal commands
    /// carry almost no training signal after normalization; frames beyond
    /// the bounds have their targets clamped, which matches the published
    /// evaluation ranges far better than the raw extremes do.
    pub fn from_commands_quantile<'a>(
        cmds: impl Iterator<Item = &'a VelocityCommand>,
        q: f64,
    ) -> Option<Self> {
        let mut per_ch: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for c in cmds {
            for (i, v) in c.channels().iter().enumerate() {
                per_ch[i].push(*v);
            }
        }
        if per_ch[0].is_empty() {
            return None;
        }
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for i in 0..3 {
            per_ch[i].sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = per_ch[i].len();
            let lo_idx = (((1.0 - q) * (n - 1) as f64).round() as usize).min(n - 1);
            let hi_idx = ((q * (n - 1) as f64).round() as usize).min(n - 1);
            min[i] = per_ch[i][lo_idx].floor();
            max[i] = per_ch[i][hi_idx].ceil();
            // Keep the quiet band representable and the interval nonempty.
            min[i] = min[i].min(-1.0);
            max[i] = max[i].max(1.0);
        }
        Some(Self { min, max })
    }

    pub fn range(&self, ch: usize) -> f64 {
        self.max[ch] - self.min[ch]
    }

    /// Clamp a raw command into the bounds, channel-wise.
    pub fn clamp(&self, cmd: &VelocityCommand) -> VelocityCommand {
        let c = cmd.channels();
        VelocityCommand::from_channels([
            c[0].clamp(self.min[0], self.max[0]),
            c[1].clamp(self.min[1], self.max[1]),
            c[2].clamp(self.min[2], self.max[2]),
        ])
    }
}

/// Map a command into [-1, 1] per channel: `2 (x - min) / (max - min) - 1`,
/// clamped at the edges.
pub fn normalize(cmd: &VelocityCommand, b: &NormalizationBounds) -> [f64; 3] {
    let c = cmd.channels();
    std::array::from_fn(|i| {
        (2.0 * (c[i] - b.min[i]) / (b.max[i] - b.min[i]) - 1.0).clamp(-1.0, 1.0)
    })
}

/// Inverse of [`normalize`] inside the bounds.
pub fn denormalize(y: &[f64; 3], b: &NormalizationBounds) -> VelocityCommand {
    VelocityCommand::from_channels(std::array::from_fn(|i| {
        b.min[i] + (y[i] + 1.0) / 2.0 * (b.max[i] - b.min[i])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_bounds_map_to_edges_and_midpoint() {
        let b = NormalizationBounds::SIM;
        let lo = normalize(&VelocityCommand { vx: -24.0, vy: 0.0, wz: 0.0 }, &b);
        assert_eq!(lo[0], -1.0);
        let hi = normalize(&VelocityCommand { vx: 16.0, vy: 9.0, wz: 40.0 }, &b);
        assert_eq!(hi, [1.0, 1.0, 1.0]);
        let mid = normalize(&VelocityCommand { vx: -4.0, vy: 0.0, wz: 6.5 }, &b);
        assert_eq!(mid[0], 0.0);
        assert_eq!(mid[1], 0.0);
        assert_eq!(mid[2], 0.0);
    }

    #[test]
    fn out_of_bounds_clamps() {
        let b = NormalizationBounds::SIM;
        let y = normalize(&VelocityCommand { vx: 100.0, vy: -100.0, wz: 0.0 }, &b);
        assert_eq!(y[0], 1.0);
        assert_eq!(y[1], -1.0);
    }

    #[test]
    fn roundtrip_inside_bounds() {
        use rand::{RngExt, SeedableRng};
        let b = NormalizationBounds::SIM;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let cmd = VelocityCommand {
                vx: rng.random_range(-24.0..16.0),
                vy: rng.random_range(-9.0..9.0),
                wz: rng.random_range(-27.0..40.0),
            };
            let back = denormalize(&normalize(&cmd, &b), &b);
            for (a, x) in back.channels().iter().zip(cmd.channels()) {
                assert!((a - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn real_bounds_valid() {
        assert!(NormalizationBounds::REAL.valid());
        assert!(NormalizationBounds::SIM.valid());
    }

    #[test]
    fn calibration_covers_observations() {
        let cmds = [
            VelocityCommand { vx: -3.2, vy: 0.4, wz: 11.9 },
            VelocityCommand { vx: 7.9, vy: -2.5, wz: -6.0 },
            VelocityCommand { vx: 0.0, vy: 0.0, wz: 0.0 },
        ];
        let b = NormalizationBounds::from_commands(cmds.iter()).unwrap();
        assert!(b.valid());
        assert_eq!(b.min[0], -4.0);
        assert_eq!(b.max[0], 8.0);
        assert_eq!(b.min[2], -6.0);
        assert_eq!(b.max[2], 12.0);
        for c in &cmds {
            let y = normalize(c, &b);
            let back = denormalize(&y, &b);
            for (a, x) in back.channels().iter().zip(c.channels()) {
                assert!((a - x).abs() < 1e-12);
            }
        }
        assert!(NormalizationBounds::from_commands([].iter()).is_none());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// denormalize(normalize(x)) == x for commands inside the bounds.
        #[test]
        fn normalize_is_invertible(
            vx in -24.0f64..16.0,
            vy in -9.0f64..9.0,
            wz in -27.0f64..40.0,
        ) {
            let b = NormalizationBounds::SIM;
            let cmd = VelocityCommand { vx, vy, wz };
            let back = denormalize(&normalize(&cmd, &b), &b);
            for (a, x) in back.channels().iter().zip(cmd.channels()) {
                prop_assert!((a - x).abs() < 1e-12);
            }
        }
    }
}
