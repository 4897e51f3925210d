//! Per-epoch input augmentation: multiplicative gain, additive shift,
//! and salt-and-pepper noise, clamped back into [0, 1]. Targets are
//! never touched.

use crate::student::FrameTensor;
use rand::RngExt;

pub fn augment(t: &FrameTensor, rng: &mut impl RngExt) -> FrameTensor {
    let gain: f32 = rng.random_range(0.8..1.2);
    let shift: f32 = rng.random_range(-0.1..0.1);
    let noise_rate: f64 = rng.random_range(0.0..0.02);
    let mut out = t.clone();
    for v in &mut out.data {
        *v = (*v * gain + shift).clamp(0.0, 1.0);
    }
    for v in &mut out.data {
        if rng.random_range(0.0..1.0) < noise_rate {
            *v = if rng.random_range(0.0..1.0) < 0.5 { 0.0 } else { 1.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Apply the gain/shift/noise pipeline with pinned parameters.
    fn apply(t: &FrameTensor, gain: f32, shift: f32, rate: f64, rng: &mut impl RngExt) -> FrameTensor {
        let mut out = t.clone();
        for v in &mut out.data {
            *v = (*v * gain + shift).clamp(0.0, 1.0);
        }
        for v in &mut out.data {
            if rng.random_range(0.0..1.0) < rate {
                *v = if rng.random_range(0.0..1.0) < 0.5 { 0.0 } else { 1.0 };
            }
        }
        out
    }

    #[test]
    fn identity_parameters_change_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = FrameTensor::new(8, 8, 2);
        for v in &mut t.data {
            *v = rng.random_range(0.0..1.0);
        }
        let out = apply(&t, 1.0, 0.0, 0.0, &mut rng);
        assert_eq!(t, out);
    }

    #[test]
    fn full_noise_rate_flips_to_binary_split() {
        // Constant 0.5 tensor, rate 1: expect a roughly even 0/1 split.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut t = FrameTensor::new(32, 32, 2);
        t.data.fill(0.5);
        let out = apply(&t, 1.0, 0.0, 1.0, &mut rng);
        let n = out.data.len() as f64;
        let ones = out.data.iter().filter(|&&v| v == 1.0).count() as f64;
        let zeros = out.data.iter().filter(|&&v| v == 0.0).count() as f64;
        assert_eq!(ones + zeros, n);
        // Binomial(n, 0.5): allow 3 sigma.
        let sigma = (n * 0.25).sqrt();
        assert!((ones - n / 2.0).abs() < 3.0 * sigma, "ones {ones} of {n}");
    }

    #[test]
    fn output_always_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let mut t = FrameTensor::new(8, 8, 2);
            for v in &mut t.data {
                *v = rng.random_range(0.0..1.0);
            }
            let out = augment(&t, &mut rng);
            for &v in &out.data {
                assert!((0.0..=1.0).contains(&v));
            }
            assert_eq!((out.channels, out.height, out.width), (2, 8, 8));
        }
    }

    #[test]
    fn seeded_augmentation_is_reproducible() {
        let mut t = FrameTensor::new(8, 8, 2);
        t.data.fill(0.3);
        let a = augment(&t, &mut ChaCha8Rng::seed_from_u64(11));
        let b = augment(&t, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }
}
