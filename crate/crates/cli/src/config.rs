//! JSON run configuration. Every section is optional; unknown keys are
//! rejected so that a misspelled physics parameter cannot silently fall back
//! to its default.

use std::fs;
use std::path::Path;

use cvqss_core::optimize::HonestPolicy;
use cvqss_core::postprocess::PostprocessConfig;
use cvqss_core::{NetworkLayout, OptimizerConfig, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutConfig {
    Equal { players: usize, length_km: f64 },
    Explicit { distances: Vec<f64> },
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig::Equal { players: 2, length_km: 50.0 }
    }
}

impl LayoutConfig {
    pub fn build(&self) -> Result<NetworkLayout, CliError> {
        match self {
            LayoutConfig::Equal { players, length_km } => NetworkLayout::equal_spacing(*players, *length_km),
            LayoutConfig::Explicit { distances } => NetworkLayout::with_distances(distances.clone()),
        }
        .map_err(CliError::config)
    }
}

/// Either an explicit list or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengths {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Lengths {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Lengths::List(v) => v.clone(),
            Lengths::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(CliError::config("length range needs step > 0 and stop >= start"));
                }
                // integer indexing keeps grid points free of accumulated rounding
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=count).map(|i| start + step * i as f64).collect()
            }
        };
        if v.is_empty() || v.iter().any(|l| !(*l >= 0.0)) {
            return Err(CliError::config("lengths must be a non-empty list of values >= 0"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lengths: Lengths,
    pub players: Vec<usize>,
    pub deltas: Vec<f64>,
    pub honest: HonestPolicy,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lengths: Lengths::Range { start: 0.0, stop: 100.0, step: 1.0 },
            players: vec![2],
            deltas: vec![0.0],
            honest: HonestPolicy::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub pulses: usize,
    pub seed: u64,
    /// Pulses per work item; fixed so that output does not depend on the
    /// thread count.
    pub chunk: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { pulses: 100_000, seed: 1, chunk: 1 << 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub params: SystemParams,
    pub layout: LayoutConfig,
    /// Fixed modulation variance; optimized when absent.
    pub v_a: Option<f64>,
    pub optimizer: OptimizerConfig,
    pub sweep: SweepConfig,
    pub simulation: SimulationSection,
    pub postprocess: PostprocessConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Config = serde_json::from_str(text).map_err(CliError::config)?;
        cfg.params.validate().map_err(CliError::config)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text)
    }
}
