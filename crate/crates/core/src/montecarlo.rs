//! Phase-space Monte-Carlo of the quantum stage.
//!
//! Quadratures are in absolute units (vacuum variance `N₀`). Per pulse:
//!
//! 1. each player draws `x_k, p_k ~ N(0, V_A·N₀)`;
//! 2. a residual phase-reference error `θ_k ~ N(0, δ)` rotates what the
//!    player actually injects, and excess noise `e_k ~ N(0, ε₀·N₀)` is added
//!    at the station;
//! 3. the dealer's heterodyne returns
//!    `x_d = √(η_D/2)·Σ_k √T_k (x'_k + e_k) + v`, with `v ~ N(0, (1 + ν_el)·N₀)`
//!    lumping the signal's own vacuum noise, the heterodyne and loss vacua and
//!    electronic noise. The same holds independently for `p_d`.
//!
//! With this convention `Var(x_d)/N₀ = (η_D/2)·Σ_k T_k (V_A + ε₀) + 1 + ν_el`,
//! which is the ensemble variance implied by the key-rate noise budget.
//! Normalized outcomes `x_d' = x_d / √(η_D/2)` satisfy
//! `E[x_d' | symbols] = Σ_k √T_k x'_k`.
//!
//! Randomness comes from [`crate::rng::Substreams`], so results do not
//! depend on how the pulse range is split.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::model::{self, NetworkLayout, ParamError, SystemParams};
use crate::rng::{Purpose, Substreams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("modulation variance must be positive, got {0}")]
    Modulation(f64),
    #[error("batch needs at least one pulse")]
    NoPulses,
    #[error("symbol table has {got} players, layout has {expected}")]
    PlayerMismatch { expected: usize, got: usize },
    #[error("cannot concatenate batches: {0}")]
    Concat(&'static str),
}

/// Per-player quadrature pairs over a contiguous pulse range, stored
/// player-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTable {
    players: usize,
    len: usize,
    first_pulse: u64,
    x: Vec<f64>,
    p: Vec<f64>,
}

impl QuadratureTable {
    pub fn zeros(players: usize, first_pulse: u64, len: usize) -> Self {
        Self { players, len, first_pulse, x: vec![0.0; players * len], p: vec![0.0; players * len] }
    }

    /// Builds a table from per-player columns (`x[k-1]`, `p[k-1]`).
    pub fn from_columns(first_pulse: u64, x: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> Self {
        let players = x.len();
        let len = x.first().map_or(0, Vec::len);
        assert!(p.len() == players && x.iter().chain(p.iter()).all(|c| c.len() == len), "ragged columns");
        Self { players, len, first_pulse, x: x.concat(), p: p.concat() }
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn first_pulse(&self) -> u64 {
        self.first_pulse
    }

    /// `(x_k, p_k)` columns of player `k` (1-based).
    pub fn player(&self, k: usize) -> (&[f64], &[f64]) {
        let r = (k - 1) * self.len..k * self.len;
        (&self.x[r.clone()], &self.p[r])
    }

    pub fn player_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let r = (k - 1) * self.len..k * self.len;
        (&mut self.x[r.clone()], &mut self.p[r])
    }

    fn append(&mut self, other: &QuadratureTable) {
        let mut x = Vec::with_capacity(self.x.len() + other.x.len());
        let mut p = Vec::with_capacity(self.p.len() + other.p.len());
        for k in 1..=self.players {
            let (a, b) = self.player(k);
            let (c, d) = other.player(k);
            x.extend_from_slice(a);
            x.extend_from_slice(c);
            p.extend_from_slice(b);
            p.extend_from_slice(d);
        }
        self.x = x;
        self.p = p;
        self.len += other.len;
    }
}

/// Dealer-side quadrature records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcomes {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl Outcomes {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub seed: u64,
    pub pulses: usize,
    pub v_a: f64,
    /// Keep the station excess-noise draws in the batch.
    pub record_injected_noise: bool,
}

/// A simulated run of the quantum stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub seed: u64,
    pub v_a: f64,
    pub n0: f64,
    pub eta_d: f64,
    /// Symbols as prepared (and later announced) by the players.
    pub symbols: QuadratureTable,
    /// Station excess noise `(e_x, e_p)`, when recorded.
    pub injected_noise: Option<QuadratureTable>,
    pub dealer: Outcomes,
    pub normalized: Outcomes,
}

impl TrialBatch {
    pub fn pulses(&self) -> usize {
        self.symbols.len()
    }

    pub fn players(&self) -> usize {
        self.symbols.players()
    }

    pub fn first_pulse(&self) -> u64 {
        self.symbols.first_pulse()
    }

    /// Joins consecutive chunks of the same run.
    pub fn concat(chunks: Vec<TrialBatch>) -> Result<TrialBatch, SimulationError> {
        let mut it = chunks.into_iter();
        let mut acc = it.next().ok_or(SimulationError::Concat("no chunks"))?;
        for c in it {
            if c.seed != acc.seed || c.players() != acc.players() || c.v_a != acc.v_a {
                return Err(SimulationError::Concat("chunks come from different runs"));
            }
            if c.first_pulse() != acc.first_pulse() + acc.pulses() as u64 {
                return Err(SimulationError::Concat("chunks are not contiguous"));
            }
            acc.symbols.append(&c.symbols);
            match (&mut acc.injected_noise, &c.injected_noise) {
                (Some(a), Some(b)) => a.append(b),
                (None, None) => {}
                _ => return Err(SimulationError::Concat("inconsistent noise recording")),
            }
            acc.dealer.x.extend_from_slice(&c.dealer.x);
            acc.dealer.p.extend_from_slice(&c.dealer.p);
            acc.normalized.x.extend_from_slice(&c.normalized.x);
            acc.normalized.p.extend_from_slice(&c.normalized.p);
        }
        Ok(acc)
    }
}

/// Draws GMCS symbols `x_k, p_k ~ N(0, V_A·N₀)` for pulses
/// `first_pulse..first_pulse + pulses` and players `1..=n`.
pub fn draw_symbols(
    streams: &Substreams,
    v_a: f64,
    n0: f64,
    first_pulse: u64,
    pulses: usize,
    n: usize,
) -> Result<QuadratureTable, SimulationError> {
    if !(v_a > 0.0) || !v_a.is_finite() {
        return Err(SimulationError::Modulation(v_a));
    }
    if pulses == 0 {
        return Err(SimulationError::NoPulses);
    }
    let sigma = (v_a * n0).sqrt();
    let mut table = QuadratureTable::zeros(n, first_pulse, pulses);
    for k in 1..=n {
        let (x, p) = table.player_mut(k);
        streams.fill_normal_pairs(Purpose::Symbols, k, first_pulse, x, p);
        x.iter_mut().chain(p.iter_mut()).for_each(|v| *v *= sigma);
    }
    Ok(table)
}

fn rotate_player(streams: &Substreams, delta: f64, k: usize, first_pulse: u64, x: &mut [f64], p: &mut [f64]) {
    if delta == 0.0 {
        return;
    }
    let mut theta = vec![0.0; x.len()];
    streams.fill_normals(Purpose::PhaseError, k, first_pulse, &mut theta);
    let sd = delta.sqrt();
    for ((xi, pi), t) in x.iter_mut().zip(p.iter_mut()).zip(theta) {
        let (s, c) = (t * sd).sin_cos();
        (*xi, *pi) = (*xi * c - *pi * s, *xi * s + *pi * c);
    }
}

/// Rotates each player's pulse by its own residual phase error
/// `θ ~ N(0, δ)`: `x' = x cos θ − p sin θ`, `p' = x sin θ + p cos θ`.
pub fn apply_phase_error(symbols: &QuadratureTable, delta: f64, streams: &Substreams) -> QuadratureTable {
    let mut out = symbols.clone();
    let first = out.first_pulse();
    for k in 1..=out.players() {
        let (x, p) = out.player_mut(k);
        rotate_player(streams, delta, k, first, x, p);
    }
    out
}

struct Channel {
    sqrt_t: Vec<f64>,
    gain: f64,
    noise_sd: f64,
    detector_sd: f64,
}

impl Channel {
    fn new(layout: &NetworkLayout, params: &SystemParams) -> Result<Self, SimulationError> {
        params.validate()?;
        Ok(Self {
            sqrt_t: model::transmittances(layout, params).into_iter().map(f64::sqrt).collect(),
            gain: (params.eta_d / 2.0).sqrt(),
            noise_sd: (params.epsilon0 * params.n0).sqrt(),
            detector_sd: ((1.0 + params.nu_el) * params.n0).sqrt(),
        })
    }

    /// Adds player `k`'s station noise and accumulates its attenuated field.
    fn add_player(
        &self,
        streams: &Substreams,
        k: usize,
        first_pulse: u64,
        (x, p): (&[f64], &[f64]),
        field: &mut Outcomes,
        noise: Option<(&mut [f64], &mut [f64])>,
    ) {
        let n = x.len();
        let (mut ex, mut ep) = (vec![0.0; n], vec![0.0; n]);
        if self.noise_sd > 0.0 {
            streams.fill_normal_pairs(Purpose::ExcessNoise, k, first_pulse, &mut ex, &mut ep);
            ex.iter_mut().chain(ep.iter_mut()).for_each(|v| *v *= self.noise_sd);
        }
        let s = self.sqrt_t[k - 1];
        for i in 0..n {
            field.x[i] += s * (x[i] + ex[i]);
            field.p[i] += s * (p[i] + ep[i]);
        }
        if let Some((nx, np)) = noise {
            nx.copy_from_slice(&ex);
            np.copy_from_slice(&ep);
        }
    }

    fn detect(&self, streams: &Substreams, first_pulse: u64, mut field: Outcomes) -> Outcomes {
        let n = field.len();
        let (mut vx, mut vp) = (vec![0.0; n], vec![0.0; n]);
        streams.fill_normal_pairs(Purpose::Detector, 0, first_pulse, &mut vx, &mut vp);
        for i in 0..n {
            field.x[i] = self.gain * field.x[i] + self.detector_sd * vx[i];
            field.p[i] = self.gain * field.p[i] + self.detector_sd * vp[i];
        }
        field
    }
}

/// Sends the (possibly phase-rotated) injected symbols through the chain
/// and the trusted heterodyne detector. Returns raw outcomes and the station
/// excess-noise draws.
pub fn propagate_and_measure(
    layout: &NetworkLayout,
    params: &SystemParams,
    injected: &QuadratureTable,
    streams: &Substreams,
) -> Result<(Outcomes, QuadratureTable), SimulationError> {
    if injected.players() != layout.players() {
        return Err(SimulationError::PlayerMismatch { expected: layout.players(), got: injected.players() });
    }
    let channel = Channel::new(layout, params)?;
    let (first, len) = (injected.first_pulse(), injected.len());
    let mut field = Outcomes { x: vec![0.0; len], p: vec![0.0; len] };
    let mut noise = QuadratureTable::zeros(injected.players(), first, len);
    for k in 1..=injected.players() {
        channel.add_player(streams, k, first, injected.player(k), &mut field, Some(noise.player_mut(k)));
    }
    Ok((channel.detect(streams, first, field), noise))
}

/// `x_d' = x_d / √(η_D/2)`.
pub fn normalize(outcomes: &Outcomes, params: &SystemParams) -> Result<Outcomes, SimulationError> {
    params.validate()?;
    let scale = 1.0 / (params.eta_d / 2.0).sqrt();
    Ok(Outcomes {
        x: outcomes.x.iter().map(|v| v * scale).collect(),
        p: outcomes.p.iter().map(|v| v * scale).collect(),
    })
}

/// Simulates pulses `first_pulse..first_pulse + len` of the run described
/// by `cfg`. Concatenating consecutive ranges gives the same batch as one
/// call over the union.
pub fn simulate_range(
    layout: &NetworkLayout,
    params: &SystemParams,
    cfg: &SimulationConfig,
    first_pulse: u64,
    len: usize,
) -> Result<TrialBatch, SimulationError> {
    let streams = Substreams::new(cfg.seed);
    let symbols = draw_symbols(&streams, cfg.v_a, params.n0, first_pulse, len, layout.players())?;
    let channel = Channel::new(layout, params)?;
    let mut field = Outcomes { x: vec![0.0; len], p: vec![0.0; len] };
    let mut noise = cfg
        .record_injected_noise
        .then(|| QuadratureTable::zeros(layout.players(), first_pulse, len));
    // one player at a time keeps the rotated copy small
    let (mut rx, mut rp) = (vec![0.0; len], vec![0.0; len]);
    for k in 1..=layout.players() {
        let (x, p) = symbols.player(k);
        rx.copy_from_slice(x);
        rp.copy_from_slice(p);
        rotate_player(&streams, params.delta, k, first_pulse, &mut rx, &mut rp);
        let slot = noise.as_mut().map(|n| n.player_mut(k));
        channel.add_player(&streams, k, first_pulse, (&rx, &rp), &mut field, slot);
    }
    let dealer = channel.detect(&streams, first_pulse, field);
    let normalized = normalize(&dealer, params)?;
    Ok(TrialBatch {
        seed: cfg.seed,
        v_a: cfg.v_a,
        n0: params.n0,
        eta_d: params.eta_d,
        symbols,
        injected_noise: noise,
        dealer,
        normalized,
    })
}

/// Whole run in one pass.
pub fn simulate(layout: &NetworkLayout, params: &SystemParams, cfg: &SimulationConfig) -> Result<TrialBatch, SimulationError> {
    simulate_range(layout, params, cfg, 0, cfg.pulses)
}

/// Closed-form second moments of a batch, in units of `N₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMoments {
    /// `Var(x_d)/N₀ = Var(p_d)/N₀`.
    pub dealer_variance: f64,
    /// `Cov(x_d, x_k)/N₀` for each player.
    pub dealer_symbol_cov: Vec<f64>,
    /// `Cov(x_d', x_k)/N₀ = √T_k · V_A · E[cos θ]`.
    pub normalized_symbol_cov: Vec<f64>,
}

pub fn model_moments(layout: &NetworkLayout, params: &SystemParams, v_a: f64) -> ModelMoments {
    let t = model::transmittances(layout, params);
    let half_eta = params.eta_d / 2.0;
    let sum_t: f64 = t.iter().sum();
    let coherence = (-params.delta / 2.0).exp();
    let normalized_symbol_cov: Vec<f64> = t.iter().map(|tk| tk.sqrt() * v_a * coherence).collect();
    ModelMoments {
        dealer_variance: half_eta * sum_t * (v_a + params.epsilon0) + 1.0 + params.nu_el,
        dealer_symbol_cov: normalized_symbol_cov.iter().map(|c| c * half_eta.sqrt()).collect(),
        normalized_symbol_cov,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn reference_pair() -> (NetworkLayout, SystemParams) {
        (NetworkLayout::equal_spacing(2, 50.0).unwrap(), SystemParams::default())
    }

    #[test]
    fn symbol_variance_and_independence() {
        let s = Substreams::new(1);
        let n = 1_000_000;
        let t = draw_symbols(&s, 4.0, 0.25, 0, n, 2).unwrap();
        let (x1, p1) = t.player(1);
        let (x2, _) = t.player(2);
        let m = stats::pooled([(x1, x1)]);
        // 3σ of a sample variance with true value 1.0
        assert!((m.var_x - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{}", m.var_x);
        for (a, b) in [(x1, x2), (x1, p1)] {
            let c = stats::pooled([(a, b)]).cov;
            assert!(c.abs() < 3.0 / (n as f64).sqrt(), "{c}");
        }
        let mean = stats::mean(x1.iter().copied());
        assert!(mean.abs() < 5.0 * (1.0 / n as f64).sqrt());
    }

    #[test]
    fn symbol_preconditions() {
        let s = Substreams::new(1);
        assert_eq!(draw_symbols(&s, 0.0, 0.25, 0, 10, 2), Err(SimulationError::Modulation(0.0)));
        assert_eq!(draw_symbols(&s, 1.0, 0.25, 0, 0, 2), Err(SimulationError::NoPulses));
    }

    #[test]
    fn zero_phase_noise_is_identity() {
        let s = Substreams::new(3);
        let t = draw_symbols(&s, 4.0, 0.25, 0, 1000, 3).unwrap();
        assert_eq!(apply_phase_error(&t, 0.0, &s), t);
    }

    #[test]
    fn rotation_preserves_norm() {
        let s = Substreams::new(3);
        let t = draw_symbols(&s, 4.0, 0.25, 10, 1000, 3).unwrap();
        let r = apply_phase_error(&t, 0.05, &s);
        for k in 1..=3 {
            let ((x, p), (rx, rp)) = (t.player(k), r.player(k));
            for i in 0..x.len() {
                let (a, b) = (x[i] * x[i] + p[i] * p[i], rx[i] * rx[i] + rp[i] * rp[i]);
                assert!((a - b).abs() <= 1e-13 * a.max(1e-300));
            }
        }
    }

    #[test]
    fn phase_error_excess_noise() {
        let s = Substreams::new(5);
        let n = 1_000_000;
        let (v_a, delta, n0) = (4.0, 1e-3, 0.25);
        let t = draw_symbols(&s, v_a, n0, 0, n, 1).unwrap();
        let r = apply_phase_error(&t, delta, &s);
        let ((x, p), (rx, rp)) = (t.player(1), r.player(1));
        let extra: f64 = x.iter().zip(rx).chain(p.iter().zip(rp)).map(|(a, b)| (b - a) * (b - a)).sum::<f64>()
            / (2 * n) as f64;
        assert!((extra / (v_a * delta * n0) - 1.0).abs() < 0.1, "{}", extra / n0);
    }

    #[test]
    fn ideal_single_player_variance() {
        let layout = NetworkLayout::equal_spacing(1, 0.0).unwrap();
        let p = SystemParams { epsilon0: 0.0, nu_el: 0.0, eta_d: 1.0, ..SystemParams::default() };
        let m = model_moments(&layout, &p, 4.0);
        assert_eq!(m.dealer_variance, 4.0 / 2.0 + 1.0);
    }

    #[test]
    fn pair_moments_constant() {
        let (layout, p) = reference_pair();
        let m = model_moments(&layout, &p, 4.0);
        let expected = 0.25 * (0.1 + 10f64.powf(-0.5)) * 4.01 + 1.1;
        assert!((m.dealer_variance - expected).abs() < 1e-14);
        assert!((m.dealer_variance - 1.517_27).abs() < 1e-5);
        assert!((m.dealer_symbol_cov[0] - 0.025f64.sqrt() * 4.0).abs() < 1e-14);
    }

    #[test]
    fn simulated_moments_match_model() {
        let (layout, p) = reference_pair();
        let n = 400_000;
        let cfg = SimulationConfig { seed: 9, pulses: n, v_a: 4.0, record_injected_noise: true };
        let b = simulate(&layout, &p, &cfg).unwrap();
        let m = model_moments(&layout, &p, 4.0);
        let n0 = p.n0;
        for d in [&b.dealer.x, &b.dealer.p] {
            let v = stats::pooled([(d.as_slice(), d.as_slice())]).var_y / n0;
            let se = m.dealer_variance * (2.0 / (n - 1) as f64).sqrt();
            assert!((v - m.dealer_variance).abs() < 3.0 * se, "{v} vs {}", m.dealer_variance);
        }
        // regression slope of x_d' on x_1 is √T₁
        let (x1, _) = b.symbols.player(1);
        let mm = stats::pooled([(b.normalized.x.as_slice(), x1)]);
        let slope = mm.cov / mm.var_x;
        let se = ((mm.var_y / mm.var_x - slope * slope) / n as f64).sqrt();
        assert!((slope - 0.1f64.sqrt()).abs() < 3.0 * se, "{slope}");
        let noise = b.injected_noise.as_ref().unwrap();
        let (ex, _) = noise.player(2);
        let ve = stats::pooled([(ex, ex)]).var_x / n0;
        assert!((ve - 0.01).abs() < 3.0 * 0.01 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn propagate_matches_simulate() {
        let (layout, p) = reference_pair();
        let p = SystemParams { delta: 1e-3, ..p };
        let cfg = SimulationConfig { seed: 4, pulses: 500, v_a: 4.0, record_injected_noise: true };
        let b = simulate(&layout, &p, &cfg).unwrap();
        let s = Substreams::new(4);
        let rotated = apply_phase_error(&b.symbols, p.delta, &s);
        let (out, noise) = propagate_and_measure(&layout, &p, &rotated, &s).unwrap();
        assert_eq!(out, b.dealer);
        assert_eq!(Some(noise), b.injected_noise);
        assert_eq!(normalize(&out, &p).unwrap(), b.normalized);
    }

    #[test]
    fn chunks_concatenate_exactly() {
        let (layout, p) = reference_pair();
        let cfg = SimulationConfig { seed: 7, pulses: 1000, v_a: 4.0, record_injected_noise: false };
        let whole = simulate(&layout, &p, &cfg).unwrap();
        let parts = [0usize, 128, 500, 1000]
            .windows(2)
            .map(|w| simulate_range(&layout, &p, &cfg, w[0] as u64, w[1] - w[0]).unwrap())
            .collect();
        assert_eq!(TrialBatch::concat(parts).unwrap(), whole);
    }

    #[test]
    fn normalization_scale() {
        let p = SystemParams { eta_d: 0.5, ..SystemParams::default() };
        let o = Outcomes { x: vec![1.0], p: vec![-0.5] };
        let n = normalize(&o, &p).unwrap();
        assert_eq!((n.x[0], n.p[0]), (2.0, -1.0));
        assert!(normalize(&o, &SystemParams { eta_d: 2.0, ..p }).is_err());
    }
}
