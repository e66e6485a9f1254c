//! Alternating optimisation of digital and wave-domain variables.

mod downlink;
mod uplink;

use std::path::Path;
use std::time::Duration;

pub use downlink::{downlink_initial_state, downlink_wave_pass, run_downlink};
pub use uplink::{restore_uplink_feasibility, run_uplink, uplink_initial_state, uplink_wave_pass};

use crate::error::{Error, Result};
use crate::metrics::Slacks;
use crate::program::Compression;
use crate::solver::SolverSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct AoSettings {
    pub max_outer: usize,
    pub max_digital: usize,
    pub max_wave: usize,
    /// Relative-change tolerance `ε_obj`.
    pub tol: f64,
    /// Uplink penalty weight `ξ` and its growth `ϱ`.
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Downlink phase step `μ` and its decay `β`.
    pub step_init: f64,
    pub step_decay: f64,
    /// Reject-and-halve downlink phase steps that lower the objective.
    pub strict_ascent: bool,
    pub solver: SolverSettings,
}

impl Default for AoSettings {
    fn default() -> Self {
        AoSettings {
            max_outer: 20,
            max_digital: 30,
            max_wave: 50,
            tol: 1e-4,
            penalty_init: 1e-2,
            penalty_growth: 3.0,
            step_init: 0.1,
            step_decay: 0.8,
            strict_ascent: true,
            solver: SolverSettings::default(),
        }
    }
}

impl AoSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_outer > 0
            && self.max_digital > 0
            && self.max_wave > 0
            && self.tol > 0.0
            && self.penalty_init > 0.0
            && self.penalty_growth > 1.0
            && self.step_init > 0.0
            && self.step_decay > 0.0
            && self.step_decay < 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid AO settings {self:?}")));
        }
        self.solver.validate()
    }
}

/// Which blocks a run optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub optimize_wave: bool,
    /// Restrict digital beamformers/combiners to non-negative reals.
    pub nonnegative_digital: bool,
    pub compression: Compression,
}

impl Variant {
    pub fn hybrid() -> Self {
        Variant {
            optimize_wave: true,
            nonnegative_digital: false,
            compression: Compression::Optimized,
        }
    }

    pub fn with_compression(mut self, c: Compression) -> Self {
        self.compression = c;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub sum_rate: f64,
    pub min_fronthaul_slack: f64,
    pub min_power_slack: f64,
    pub elapsed_ms: f64,
}

/// Per-outer-iteration objective history; entry 0 is the initial point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
}

impl ConvergenceTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.sum_rate).collect()
    }

    /// `(iteration, drop)` wherever the objective fell by more than `tol`.
    pub fn decreases(&self, tol: f64) -> Vec<(usize, f64)> {
        self.entries
            .windows(2)
            .filter(|w| w[1].sum_rate < w[0].sum_rate - tol)
            .map(|w| (w[1].iter, w[0].sum_rate - w[1].sum_rate))
            .collect()
    }

    /// Writes `iter,sum_rate_bpshz,min_fronthaul_slack,min_power_slack,elapsed_ms`.
    pub fn write_csv(&self, path: &Path, timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "iter",
            "sum_rate_bpshz",
            "min_fronthaul_slack",
            "min_power_slack",
            "elapsed_ms",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.iter.to_string(),
                e.sum_rate.to_string(),
                e.min_fronthaul_slack.to_string(),
                e.min_power_slack.to_string(),
                if timing {
                    e.elapsed_ms.to_string()
                } else {
                    "0".into()
                },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of one alternating-optimisation run.
#[derive(Debug, Clone)]
pub struct AoOutcome<S> {
    pub state: S,
    pub sum_rate: f64,
    pub slacks: Slacks,
    pub trace: ConvergenceTrace,
    pub outer_iters: usize,
    /// Wall time spent in digital passes.
    pub digital_time: Duration,
    pub wave_time: Duration,
    /// Some subproblem stopped at an iteration cap.
    pub degraded: bool,
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

/// Smallest `c` in `[lo, ∞)` with `f(c) <= target` for decreasing `f`.
fn bisect_decreasing(f: impl Fn(f64) -> Result<f64>, target: f64, lo: f64) -> Result<f64> {
    if f(lo)? <= target {
        return Ok(lo);
    }
    let mut hi = lo.max(1e-300) * 2.0;
    let mut guard = 0;
    while f(hi)? > target {
        hi *= 4.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::Numeric("bisection bracket not found".into()));
        }
    }
    let mut lo = lo;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if f(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_threshold() {
        let c = bisect_decreasing(|c| Ok(1.0 / c), 0.5, 1e-6).unwrap();
        assert!((c - 2.0).abs() < 1e-9);
        let c = bisect_decreasing(|c| Ok(1.0 / c), 1e9, 1e-6).unwrap();
        assert_eq!(c, 1e-6);
    }

    #[test]
    fn trace_decreases_detected() {
        let t = ConvergenceTrace {
            entries: [1.0, 2.0, 1.5, 1.5]
                .iter()
                .enumerate()
                .map(|(i, &v)| TraceEntry {
                    iter: i,
                    sum_rate: v,
                    min_fronthaul_slack: 0.0,
                    min_power_slack: 0.0,
                    elapsed_ms: 0.0,
                })
                .collect(),
        };
        assert_eq!(t.decreases(1e-9), vec![(2, 0.5)]);
    }

    #[test]
    fn settings_validate() {
        assert!(AoSettings::default().validate().is_ok());
        let s = AoSettings {
            step_decay: 0.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
