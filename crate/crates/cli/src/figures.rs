//! Built-in sweep presets for the three reference rate-versus-distance
//! studies.

use std::fs;
use std::path::Path;

use cvqss_core::optimize::HonestPolicy;
use cvqss_core::{OptimizerConfig, SystemParams};

use crate::error::CliError;
use crate::plot::emit_plot_script;
use crate::sweep::{run_sweep, write_rows, SweepSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub title: &'static str,
    pub spec: SweepSpec,
}

fn lengths() -> Vec<f64> {
    (0..=100).map(f64::from).collect()
}

fn base(epsilon0: f64) -> SystemParams {
    SystemParams { gamma: 0.2, epsilon0, nu_el: 0.1, eta_d: 0.5, f_rec: 0.95, t_b: 1.0, delta: 0.0, n0: 0.25 }
}

fn preset(name: &'static str, title: &'static str, players: Vec<usize>, deltas: Vec<f64>, epsilon0: f64) -> Preset {
    Preset {
        name,
        title,
        spec: SweepSpec {
            lengths: lengths(),
            players,
            deltas,
            params: base(epsilon0),
            optimizer: OptimizerConfig::default(),
            honest: HonestPolicy::All,
        },
    }
}

/// `n ∈ {2, 5, 10, 20}` at `ε₀ = 0.01`.
pub fn player_scaling() -> Preset {
    preset("player_scaling", "Key rate vs distance, epsilon0 = 0.01", vec![2, 5, 10, 20], vec![0.0], 0.01)
}

/// `n ∈ {10, 20, 50, 100}` at `ε₀ = 0.001`.
pub fn large_networks() -> Preset {
    preset("large_networks", "Key rate vs distance, epsilon0 = 0.001", vec![10, 20, 50, 100], vec![0.0], 0.001)
}

/// `n = 20`, `ε₀ = 0.001`, `δ ∈ {0, 1e-4, 1e-3}`.
pub fn phase_noise() -> Preset {
    preset("phase_noise", "Key rate vs distance with phase noise, n = 20", vec![20], vec![0.0, 1e-4, 1e-3], 0.001)
}

pub fn presets() -> [Preset; 3] {
    [player_scaling(), large_networks(), phase_noise()]
}

pub fn find(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

/// Runs one preset, writing `<name>.csv` and `<name>.gp` into `dir`.
pub fn write_preset(preset: &Preset, dir: &Path) -> Result<(), CliError> {
    let rows = run_sweep(&preset.spec)?;
    let mut csv = Vec::new();
    write_rows(&rows, &mut csv).map_err(CliError::config)?;
    let text = String::from_utf8(csv).expect("CSV writer emits UTF-8");
    let script = emit_plot_script(&text, preset.title).map_err(CliError::config)?;
    let csv_path = dir.join(format!("{}.csv", preset.name));
    fs::write(&csv_path, &text).map_err(CliError::io(&csv_path))?;
    let gp_path = dir.join(format!("{}.gp", preset.name));
    fs::write(&gp_path, script).map_err(CliError::io(&gp_path))?;
    Ok(())
}

pub fn write_all(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    presets().iter().try_for_each(|p| write_preset(p, dir))
}
