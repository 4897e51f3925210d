//! Mission termination rules.
//!
//! All rules are evaluated on a rolling basis: a per-frame condition
//! (median of the last five error norms under a threshold, or quiet
//! commands) must hold for a persistence window of consecutive frames
//! before the rule fires. Precedence is total:
//! hard error > soft zero > student quiet > timeout.

use crate::simkit::episode::FrameRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    HardError,
    SoftZero,
    StudentQuiet,
    HardTimeout,
}

/// Which rules are active and their parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TerminationRules {
    pub hard_error: bool,
    pub soft_zero: bool,
    pub student_quiet: bool,
    /// Median filter width over error norms.
    pub median_window: usize,
    /// Persistence requirement, seconds.
    pub persist_secs: f64,
    /// Error thresholds, pixels.
    pub hard_px: f64,
    pub soft_px: f64,
    /// Quiet-command threshold, actuator units, per channel.
    pub quiet_units: f64,
    /// Hard timeout, seconds.
    pub timeout_secs: f64,
}

impl TerminationRules {
    /// Analytical-controller rules: 40 px hard, 80 px + zero-command soft.
    pub fn teacher(timeout_secs: f64) -> Self {
        Self {
            hard_error: true,
            soft_zero: true,
            student_quiet: false,
            median_window: 5,
            persist_secs: 3.0,
            hard_px: 40.0,
            soft_px: 80.0,
            quiet_units: 1.0,
            timeout_secs,
        }
    }

    /// Learned-controller rule: every channel of the last five commands
    /// within one actuator unit, persisting three seconds.
    pub fn student(timeout_secs: f64) -> Self {
        Self { hard_error: false, soft_zero: false, student_quiet: true, ..Self::teacher(timeout_secs) }
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Median of the last `w` error norms ending at frame `i` (inclusive).
fn rolling_median(history: &[FrameRecord], i: usize, w: usize) -> Option<f64> {
    if i + 1 < w {
        return None;
    }
    let mut buf: Vec<f64> = history[i + 1 - w..=i].iter().map(|f| f.err_norm).collect();
    Some(median_of(&mut buf))
}

/// Quiet check at frame `i`: each channel of the last `w` issued commands
/// has absolute value at most `units`.
fn quiet_at(history: &[FrameRecord], i: usize, w: usize, units: f64) -> bool {
    if i + 1 < w {
        return false;
    }
    history[i + 1 - w..=i].iter().all(|f| f.cmd.max_abs() <= units)
}

/// Evaluate the termination rules over the frame history (ordered by
/// time). Returns the fired rule with the highest precedence, or None.
pub fn check_termination(history: &[FrameRecord], rules: &TerminationRules, dt: f64) -> Option<RuleKind> {
    if history.is_empty() {
        return None;
    }
    let last = history.len() - 1;
    let persist = (rules.persist_secs / dt).round().max(1.0) as usize;
    let w = rules.median_window;

    let persists = |cond: &dyn Fn(usize) -> bool| -> bool {
        if history.len() < persist {
            return false;
        }
        (history.len() - persist..history.len()).all(cond)
    };

    if rules.hard_error
        && persists(&|i| rolling_median(history, i, w).is_some_and(|m| m <= rules.hard_px))
    {
        return Some(RuleKind::HardError);
    }
    if rules.soft_zero
        && persists(&|i| {
            rolling_median(history, i, w).is_some_and(|m| m <= rules.soft_px)
                && history[i].cmd.is_zero()
        })
    {
        return Some(RuleKind::SoftZero);
    }
    if rules.student_quiet && persists(&|i| quiet_at(history, i, w, rules.quiet_units)) {
        return Some(RuleKind::StudentQuiet);
    }
    if history[last].t >= rules.timeout_secs - dt / 2.0 {
        return Some(RuleKind::HardTimeout);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::{ImagePoint, Pose};
    use crate::perception::KeypointSet;
    use crate::servo::VelocityCommand;

    fn frame(i: usize, dt: f64, err: f64, cmd: VelocityCommand) -> FrameRecord {
        let p = ImagePoint::new(0.0, 0.0);
        FrameRecord {
            frame: i as u32,
            t: i as f64 * dt,
            pose: Pose::new(0.0, 0.0, 1.7, 0.0),
            kps: KeypointSet { fl: p, fr: p, br: p, bl: p },
            err_norm: err,
            raw: cmd,
            cmd,
            singular: false,
            used_fallback: false,
        }
    }

    fn history(specs: &[(f64, VelocityCommand)]) -> Vec<FrameRecord> {
        specs.iter().enumerate().map(|(i, &(e, c))| frame(i, 0.1, e, c)).collect()
    }

    #[test]
    fn hard_error_fires_after_three_seconds() {
        let zero = VelocityCommand::ZERO;
        // 30 persistence frames require 34 frames of history for the
        // 5-wide median to exist at the window start.
        let h = history(&vec![(30.0, zero); 34]);
        assert_eq!(
            check_termination(&h, &TerminationRules::teacher(75.0), 0.1),
            Some(RuleKind::HardError)
        );
        let short = history(&vec![(30.0, zero); 33]);
        assert_eq!(check_termination(&short, &TerminationRules::teacher(75.0), 0.1), None);
    }

    #[test]
    fn nonzero_command_blocks_soft_zero() {
        let moving = VelocityCommand { vx: 1.0, vy: 0.0, wz: 0.0 };
        let h = history(&vec![(60.0, moving); 60]);
        assert_eq!(check_termination(&h, &TerminationRules::teacher(75.0), 0.1), None);
        let still = VelocityCommand::ZERO;
        let h = history(&vec![(60.0, still); 60]);
        assert_eq!(
            check_termination(&h, &TerminationRules::teacher(75.0), 0.1),
            Some(RuleKind::SoftZero)
        );
    }

    #[test]
    fn hard_beats_soft() {
        let zero = VelocityCommand::ZERO;
        let h = history(&vec![(35.0, zero); 40]);
        assert_eq!(
            check_termination(&h, &TerminationRules::teacher(75.0), 0.1),
            Some(RuleKind::HardError)
        );
    }

    #[test]
    fn student_quiet_needs_full_window() {
        let quiet = VelocityCommand { vx: 1.0, vy: -1.0, wz: 0.0 };
        let loud = VelocityCommand { vx: 2.0, vy: 0.0, wz: 0.0 };
        let mut specs = vec![(100.0, loud); 10];
        specs.extend(vec![(100.0, quiet); 34]);
        let h = history(&specs);
        assert_eq!(
            check_termination(&h, &TerminationRules::student(75.0), 0.1),
            Some(RuleKind::StudentQuiet)
        );
        // One loud command inside the quiet stretch resets it.
        let mut specs = vec![(100.0, quiet); 20];
        specs.push((100.0, loud));
        specs.extend(vec![(100.0, quiet); 25]);
        let h = history(&specs);
        assert_eq!(check_termination(&h, &TerminationRules::student(75.0), 0.1), None);
    }

    #[test]
    fn timeout_fires_at_limit() {
        let loud = VelocityCommand { vx: 50.0, vy: 0.0, wz: 0.0 };
        let h = history(&vec![(500.0, loud); 751]);
        assert_eq!(
            check_termination(&h, &TerminationRules::teacher(75.0), 0.1),
            Some(RuleKind::HardTimeout)
        );
        let h = history(&vec![(500.0, loud); 750]);
        assert_eq!(check_termination(&h, &TerminationRules::teacher(75.0), 0.1), None);
    }

    /// Brute-force oracle over random traces: recheck the rolling windows
    /// with an independent direct implementation.
    #[test]
    fn matches_sliding_window_oracle() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let rules = TerminationRules::teacher(75.0);
        for _ in 0..300 {
            let n = rng.random_range(1..80);
            let mut h = Vec::new();
            for i in 0..n {
                let err = rng.random_range(0.0..120.0);
                let cmd = if rng.random_range(0.0..1.0) < 0.5 {
                    VelocityCommand::ZERO
                } else {
                    VelocityCommand { vx: rng.random_range(-3.0..3.0_f64).round(), vy: 0.0, wz: 0.0 }
                };
                h.push(frame(i, 0.1, err, cmd));
            }
            let got = check_termination(&h, &rules, 0.1);

            // Oracle: explicit loops, no shared helpers.
            let persist = 30usize;
            let med = |i: usize| -> Option<f64> {
                if i + 1 < 5 {
                    return None;
                }
                let mut v: Vec<f64> = (i + 1 - 5..=i).map(|j| h[j].err_norm).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                Some(v[2])
            };
            let mut want = None;
            if h.len() >= persist {
                let lo = h.len() - persist;
                if (lo..h.len()).all(|i| med(i).map(|m| m <= 40.0).unwrap_or(false)) {
                    want = Some(RuleKind::HardError);
                } else if (lo..h.len()).all(|i| {
                    med(i).map(|m| m <= 80.0).unwrap_or(false) && h[i].cmd.is_zero()
                }) {
                    want = Some(RuleKind::SoftZero);
                }
            }
            if want.is_none() && h.last().unwrap().t >= 75.0 - 0.05 {
                want = Some(RuleKind::HardTimeout);
            }
            assert_eq!(got, want);
        }
    }
}
