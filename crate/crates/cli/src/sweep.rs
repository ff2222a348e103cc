//! Grid sweeps over fiber length, player count and phase noise.

use std::io::Write;

use cvqss_core::keyrate::{self, ModulationPolicy};
use cvqss_core::optimize::{self, HonestPolicy};
use cvqss_core::{NetworkLayout, OptimizerConfig, SystemParams};
use rayon::prelude::*;

use crate::error::CliError;

pub const SWEEP_HEADER: [&str; 10] = [
    "length_km",
    "players",
    "delta",
    "va_opt",
    "i_ab",
    "chi_be",
    "rate_raw",
    "rate_clamped",
    "limiting_player",
    "va_at_bound",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lengths: Vec<f64>,
    pub players: Vec<usize>,
    pub deltas: Vec<f64>,
    pub params: SystemParams,
    pub optimizer: OptimizerConfig,
    pub honest: HonestPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub length_km: f64,
    pub players: usize,
    pub delta: f64,
    pub va_opt: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub rate_raw: f64,
    pub rate_clamped: f64,
    pub limiting_player: usize,
    pub va_at_bound: bool,
}

impl SweepRow {
    pub fn record(&self) -> [String; 10] {
        [
            self.length_km.to_string(),
            self.players.to_string(),
            self.delta.to_string(),
            self.va_opt.to_string(),
            self.i_ab.to_string(),
            self.chi_be.to_string(),
            self.rate_raw.to_string(),
            self.rate_clamped.to_string(),
            self.limiting_player.to_string(),
            self.va_at_bound.to_string(),
        ]
    }
}

/// Optimizes one grid point. A point where no modulation gives a finite
/// rate is reported with `NaN` rate and zero clamped rate.
pub fn sweep_point(spec: &SweepSpec, length_km: f64, players: usize, delta: f64) -> Result<SweepRow, CliError> {
    let layout = NetworkLayout::equal_spacing(players, length_km).map_err(CliError::config)?;
    let params = SystemParams { delta, ..spec.params };
    params.validate().map_err(CliError::config)?;
    let blank = SweepRow {
        length_km,
        players,
        delta,
        va_opt: f64::NAN,
        i_ab: f64::NAN,
        chi_be: f64::NAN,
        rate_raw: f64::NAN,
        rate_clamped: 0.0,
        limiting_player: 0,
        va_at_bound: false,
    };
    let opt = match optimize::optimize_va(&layout, &params, &spec.optimizer, spec.honest) {
        Ok(o) => o,
        Err(optimize::OptimizeError::NoFiniteValue) => return Ok(blank),
        Err(e) => return Err(CliError::config(e)),
    };
    let limiting = match spec.honest {
        HonestPolicy::All => keyrate::qss_rate(&layout, &params, &ModulationPolicy::Shared(opt.v_a))
            .map(|r| r.limiting().clone()),
        HonestPolicy::Player(j) => keyrate::player_rate(&layout, &params, opt.v_a, j),
    }
    .map_err(CliError::config)?;
    Ok(SweepRow {
        va_opt: opt.v_a,
        i_ab: limiting.mutual_information,
        chi_be: limiting.holevo,
        rate_raw: opt.rate,
        rate_clamped: opt.rate.max(0.0),
        limiting_player: limiting.honest,
        va_at_bound: opt.at_boundary,
        ..blank
    })
}

/// Evaluates every `(L, n, δ)` point in parallel; rows come back sorted by
/// `(n, δ, L)`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, CliError> {
    if spec.lengths.is_empty() || spec.players.is_empty() || spec.deltas.is_empty() {
        return Err(CliError::config("sweep needs at least one length, player count and delta"));
    }
    let mut points = Vec::new();
    for &n in &spec.players {
        for &d in &spec.deltas {
            for &l in &spec.lengths {
                points.push((l, n, d));
            }
        }
    }
    let mut rows = points
        .par_iter()
        .map(|&(l, n, d)| sweep_point(spec, l, n, d))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| {
        a.players
            .cmp(&b.players)
            .then(a.delta.total_cmp(&b.delta))
            .then(a.length_km.total_cmp(&b.length_km))
    });
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Largest grid length with `rate_raw > floor` for the `(n, δ)` series.
pub fn max_distance(rows: &[SweepRow], players: usize, delta: f64, floor: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.players == players && r.delta == delta && r.rate_raw > floor)
        .map(|r| r.length_km)
        .max_by(f64::total_cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(params: SystemParams, lengths: Vec<f64>, players: Vec<usize>) -> SweepSpec {
        SweepSpec {
            lengths,
            players,
            deltas: vec![0.0],
            params,
            optimizer: OptimizerConfig::default(),
            honest: HonestPolicy::All,
        }
    }

    #[test]
    fn lossless_point_sits_on_upper_bound() {
        let p = SystemParams { gamma: 0.0, epsilon0: 0.0, eta_d: 1.0, nu_el: 0.0, f_rec: 1.0, ..SystemParams::default() };
        let rows = run_sweep(&spec(p, vec![0.0], vec![1])).unwrap();
        let r = rows[0];
        assert!(r.va_at_bound);
        assert_eq!(r.va_opt, 1000.0);
        assert!((r.rate_raw - ((r.va_opt + 2.0) / 2.0).log2()).abs() < 1e-12);
        assert!(r.chi_be.abs() < 1e-12);
    }

    #[test]
    fn rows_sorted_and_clamped() {
        let rows = run_sweep(&spec(SystemParams::default(), vec![40.0, 0.0, 20.0], vec![5, 2])).unwrap();
        let keys: Vec<(usize, f64)> = rows.iter().map(|r| (r.players, r.length_km)).collect();
        assert_eq!(keys, vec![(2, 0.0), (2, 20.0), (2, 40.0), (5, 0.0), (5, 20.0), (5, 40.0)]);
        for r in &rows {
            assert_eq!(r.rate_clamped, r.rate_raw.max(0.0));
        }
    }

    #[test]
    fn huge_noise_never_positive() {
        let p = SystemParams { epsilon0: 10.0, ..SystemParams::default() };
        let rows = run_sweep(&spec(p, (0..=10).map(|l| l as f64 * 5.0).collect(), vec![2])).unwrap();
        assert_eq!(max_distance(&rows, 2, 0.0, 0.0), None);
    }

    #[test]
    fn fewer_players_reach_further() {
        let lengths: Vec<f64> = (0..=100).map(f64::from).collect();
        let rows = run_sweep(&spec(SystemParams::default(), lengths, vec![2, 20])).unwrap();
        let (two, twenty) = (max_distance(&rows, 2, 0.0, 0.0), max_distance(&rows, 20, 0.0, 0.0));
        assert!(two.unwrap_or(-1.0) >= twenty.unwrap_or(-1.0));
        assert!(two.is_some());
    }

    #[test]
    fn csv_header_is_fixed() {
        let mut buf = Vec::new();
        write_rows(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "length_km,players,delta,va_opt,i_ab,chi_be,rate_raw,rate_clamped,limiting_player,va_at_bound\n"
        );
    }
}
