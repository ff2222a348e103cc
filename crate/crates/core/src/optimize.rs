//! Search for the modulation variance maximizing the secret-sharing rate.
//!
//! A logarithmic coarse grid locates the best region, then golden-section
//! refinement (in `ln V_A`) runs inside the bracket formed by the best grid
//! point's neighbours. No unimodality is assumed outside that bracket; the
//! result is never worse than the best grid point.

use thiserror::Error;

use crate::keyrate::{self, ModulationPolicy};
use crate::model::{NetworkLayout, SystemParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("invalid bounds [{lo}, {hi}]: need 0 < lo < hi")]
    Bounds { lo: f64, hi: f64 },
    #[error("coarse grid needs at least 3 points, got {0}")]
    Grid(usize),
    #[error("objective is not finite anywhere on the coarse grid")]
    NoFiniteValue,
}

/// Which honest-player hypotheses enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HonestPolicy {
    /// `min_j R_j` over every player.
    #[default]
    All,
    /// A single player's two-party rate.
    Player(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct OptimizerConfig {
    pub v_lo: f64,
    pub v_hi: f64,
    pub grid_points: usize,
    pub iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { v_lo: 0.01, v_hi: 1000.0, grid_points: 60, iterations: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationResult {
    pub v_a: f64,
    pub rate: f64,
    pub evaluations: usize,
    /// Final golden-section interval.
    pub bracket: (f64, f64),
    /// The best coarse-grid point sat on one of the bounds.
    pub at_boundary: bool,
}

/// Maximizes `objective` over `[cfg.v_lo, cfg.v_hi]`. Non-finite objective
/// values are treated as `-∞`.
pub fn maximize_log_scale(
    mut objective: impl FnMut(f64) -> f64,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizeError> {
    let OptimizerConfig { v_lo, v_hi, grid_points, iterations } = *cfg;
    if !(v_lo > 0.0 && v_hi > v_lo && v_hi.is_finite()) {
        return Err(OptimizeError::Bounds { lo: v_lo, hi: v_hi });
    }
    if grid_points < 3 {
        return Err(OptimizeError::Grid(grid_points));
    }
    let (a, b) = (v_lo.ln(), v_hi.ln());
    let step = (b - a) / (grid_points - 1) as f64;
    let grid_x = |i: usize| if i + 1 == grid_points { b } else { a + step * i as f64 };

    let mut evaluations = 0;
    // endpoints map back to the exact bounds
    let to_v = |u: f64| if u == a { v_lo } else if u == b { v_hi } else { u.exp() };
    let mut eval = |u: f64| {
        evaluations += 1;
        let r = objective(to_v(u));
        if r.is_finite() { r } else { f64::NEG_INFINITY }
    };

    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let mut best_index = 0;
    for i in 0..grid_points {
        let u = grid_x(i);
        let r = eval(u);
        if r > best.1 {
            best = (u, r);
            best_index = i;
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Err(OptimizeError::NoFiniteValue);
    }
    let at_boundary = best_index == 0 || best_index + 1 == grid_points;

    let mut lo = grid_x(best_index.saturating_sub(1));
    let mut hi = grid_x((best_index + 1).min(grid_points - 1));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..iterations {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = eval(d);
        }
        for (u, r) in [(c, fc), (d, fd)] {
            if r > best.1 {
                best = (u, r);
            }
        }
    }
    for (u, r) in [(c, fc), (d, fd)] {
        if r > best.1 {
            best = (u, r);
        }
    }

    Ok(OptimizationResult {
        v_a: to_v(best.0),
        rate: best.1,
        evaluations,
        bracket: (to_v(lo), to_v(hi)),
        at_boundary,
    })
}

/// Objective used by the optimizer: the secret-sharing rate (or a single
/// player's rate) at shared modulation `v_a`. The noise budget, including
/// the `V_A·δ` phase-noise term, is rebuilt for every candidate.
pub fn objective(layout: &NetworkLayout, params: &SystemParams, honest: HonestPolicy, v_a: f64) -> f64 {
    let r = match honest {
        HonestPolicy::All => keyrate::qss_rate(layout, params, &ModulationPolicy::Shared(v_a)).map(|r| r.rate),
        HonestPolicy::Player(j) => keyrate::key_rate(layout, params, v_a, j),
    };
    r.unwrap_or(f64::NAN)
}

/// Optimizes the shared modulation variance for one operating point.
pub fn optimize_va(
    layout: &NetworkLayout,
    params: &SystemParams,
    cfg: &OptimizerConfig,
    honest: HonestPolicy,
) -> Result<OptimizationResult, OptimizeError> {
    maximize_log_scale(|v| objective(layout, params, honest, v), cfg)
}
