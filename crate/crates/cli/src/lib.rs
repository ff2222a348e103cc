//! Experiment harness around `cvqss-core`: JSON configuration, parameter
//! sweeps, Monte-Carlo batch files, post-processing reports and plot
//! scripts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch_csv;
pub mod config;
pub mod error;
pub mod figures;
pub mod plot;
pub mod report;
pub mod sweep;

use cvqss_core::montecarlo::{self, SimulationConfig, SimulationError, TrialBatch};
use cvqss_core::{NetworkLayout, SystemParams};
use rayon::prelude::*;

pub use error::CliError;

/// Simulates a batch in fixed-size chunks on the rayon pool. The chunk
/// boundaries, not the thread count, define the work split, and the
/// counter-based streams make the result independent of both.
pub fn simulate_chunked(
    layout: &NetworkLayout,
    params: &SystemParams,
    cfg: &SimulationConfig,
    chunk: usize,
) -> Result<TrialBatch, SimulationError> {
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..cfg.pulses).step_by(chunk).collect();
    if starts.is_empty() {
        return Err(SimulationError::NoPulses);
    }
    let parts = starts
        .par_iter()
        .map(|&s| montecarlo::simulate_range(layout, params, cfg, s as u64, chunk.min(cfg.pulses - s)))
        .collect::<Result<Vec<_>, _>>()?;
    TrialBatch::concat(parts)
}
