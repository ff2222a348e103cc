//! Classical post-processing of a simulated batch, and the XOR `(n, n)`
//! sharing primitive.
//!
//! A round proceeds as follows. A random fraction of the pulses is disclosed
//! by every player and used to estimate each transmittance `T_k` from the
//! covariance between the normalized dealer outcomes and that player's
//! symbols. The rest is split into one subset per honest-player hypothesis
//! `j`. Inside subset `j`, half of the pulses are disclosed: the dealer
//! displaces the outcomes by the other players' announced contributions,
//! `x_R = x_d' − Σ_{k≠j} √T̂_k x_k`, and inverts the two-party moment model
//! to get `V̂_A`, `T̂_j` and the excess noise `ξ̂` referred to player `j`'s
//! input. These feed the same rate function as the analytic path. The
//! undisclosed half is the key material.
//!
//! Estimates use both quadratures, pooled.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::keyrate::{self, Channel, KeyRateError, KeyRateReport, ModulationPolicy, PlayerRate};
use crate::model::{self, NetworkLayout, SystemParams};
use crate::montecarlo::TrialBatch;
use crate::rng::{Purpose, Substreams};
use crate::stats;

/// z-score above which announced symbols are declared inconsistent with
/// the calibrated modulation.
pub const TAMPER_Z: f64 = 5.0;
/// Statistical tolerance, in standard errors, for non-physical estimates.
pub const PHYSICAL_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostprocessError {
    #[error("{stage}: need at least {needed} samples, got {got}")]
    InsufficientSamples { stage: &'static str, needed: usize, got: usize },
    #[error("announced symbols of player {player} have zero variance")]
    ZeroVariance { player: usize },
    #[error("estimation failure, possible tampering by player {player}: {what} (z = {z:.2})")]
    Tamper { player: usize, what: &'static str, z: f64 },
    #[error("non-physical estimate for player {player}: {what} = {value} (σ = {sigma})")]
    NonPhysical { player: usize, what: &'static str, value: f64, sigma: f64 },
    #[error("batch has {got} players, layout has {expected}")]
    PlayerMismatch { expected: usize, got: usize },
    #[error("missing announcements: expected {expected} transmittance estimates, got {got}")]
    MissingAnnouncements { expected: usize, got: usize },
    #[error("invalid post-processing configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    KeyRate(#[from] KeyRateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DisclosurePurpose {
    TransmittanceEstimation,
    PlayerRound(usize),
}

/// Pulses whose symbols are announced, and by whom.
#[derive(Debug, Clone, PartialEq)]
pub struct DisclosureSet {
    pub indices: Vec<usize>,
    /// 1-based players announcing on these pulses.
    pub announcing: Vec<usize>,
    pub purpose: DisclosurePurpose,
}

impl DisclosureSet {
    /// Every player announces on `indices`.
    pub fn all_players(indices: Vec<usize>, players: usize, purpose: DisclosurePurpose) -> Self {
        Self { indices, announcing: (1..=players).collect(), purpose }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PostprocessConfig {
    /// Share of all pulses disclosed for transmittance estimation.
    pub transmittance_fraction: f64,
    /// Share of each round's subset disclosed for noise estimation.
    pub disclosure_fraction: f64,
    /// Relative sizes of the per-player rounds; equal when absent.
    pub round_weights: Option<Vec<f64>>,
    /// Minimum disclosed pulses per estimate.
    pub min_samples: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self { transmittance_fraction: 0.1, disclosure_fraction: 0.5, round_weights: None, min_samples: 1000 }
    }
}

impl PostprocessConfig {
    fn validate(&self, players: usize) -> Result<(), PostprocessError> {
        let frac = |f: f64| f > 0.0 && f < 1.0;
        if !frac(self.transmittance_fraction) {
            return Err(PostprocessError::Config("transmittance_fraction must lie in (0, 1)"));
        }
        if !frac(self.disclosure_fraction) {
            return Err(PostprocessError::Config("disclosure_fraction must lie in (0, 1)"));
        }
        if let Some(w) = &self.round_weights {
            if w.len() != players {
                return Err(PostprocessError::Config("round_weights needs one entry per player"));
            }
            if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(PostprocessError::Config("round_weights must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-player transmittance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittanceEstimate {
    pub player: usize,
    pub sqrt_t_hat: f64,
    pub t_hat: f64,
    /// Standard error of `T̂`.
    pub std_err: f64,
    /// Announced-symbol variance over `N₀`.
    pub announced_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub players: Vec<TransmittanceEstimate>,
    /// Modulation variance from all announced symbols, SNU.
    pub v_a_hat: f64,
    /// Excess noise at the dealer's input left after removing every
    /// player's contribution, SNU.
    pub epsilon_hat: f64,
    pub samples: usize,
}

impl EstimationReport {
    pub fn sqrt_t_hat(&self) -> Vec<f64> {
        self.players.iter().map(|e| e.sqrt_t_hat).collect()
    }
}

fn gather(col: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| col[i]).collect()
}

fn check_players(batch: &TrialBatch, layout: &NetworkLayout) -> Result<(), PostprocessError> {
    if batch.players() != layout.players() {
        return Err(PostprocessError::PlayerMismatch { expected: layout.players(), got: batch.players() });
    }
    Ok(())
}

/// Estimates every `T_k` on the disclosed pulses:
/// `√T̂_k = [Cov(x_d', x_k) + Cov(p_d', p_k)] / (2·V_A·N₀)` with the calibrated
/// `V_A` and `N₀` carried by the batch.
///
/// Announced symbols whose variance departs from `V_A·N₀` by more than
/// [`TAMPER_Z`] standard errors, or a negative covariance beyond
/// [`PHYSICAL_SIGMAS`], are reported as [`PostprocessError::Tamper`].
pub fn estimate_transmittance(
    batch: &TrialBatch,
    disclosure: &DisclosureSet,
    params: &SystemParams,
    min_samples: usize,
) -> Result<EstimationReport, PostprocessError> {
    let m = disclosure.len();
    if m < min_samples.max(2) {
        return Err(PostprocessError::InsufficientSamples { stage: "transmittance estimation", needed: min_samples.max(2), got: m });
    }
    let idx = &disclosure.indices;
    let (dx, dp) = (gather(&batch.normalized.x, idx), gather(&batch.normalized.p, idx));
    let var_a = batch.v_a * batch.n0;
    let mut players = Vec::with_capacity(batch.players());
    let (mut rx, mut rp) = (dx.clone(), dp.clone());
    let mut announced_sum = 0.0;
    for k in 1..=batch.players() {
        let (xs, ps) = batch.symbols.player(k);
        let (x, p) = (gather(xs, idx), gather(ps, idx));
        let mo = stats::pooled([(dx.as_slice(), x.as_slice()), (dp.as_slice(), p.as_slice())]);
        if !(mo.var_x > 0.0) {
            return Err(PostprocessError::ZeroVariance { player: k });
        }
        let dof = (mo.n - 2) as f64;
        let z_var = (mo.var_x / var_a - 1.0) / (2.0 / dof).sqrt();
        if z_var.abs() > TAMPER_Z {
            return Err(PostprocessError::Tamper { player: k, what: "announced symbol variance", z: z_var });
        }
        let sqrt_t = mo.cov / var_a;
        // sampling variance of a covariance estimate: (σ_x²σ_y² + c²)/m
        let se_sqrt = ((var_a * mo.var_y + mo.cov * mo.cov) / dof).sqrt() / var_a;
        if sqrt_t < -PHYSICAL_SIGMAS * se_sqrt {
            return Err(PostprocessError::Tamper { player: k, what: "negative covariance", z: sqrt_t / se_sqrt });
        }
        let sqrt_t = sqrt_t.max(0.0);
        let t_hat = sqrt_t * sqrt_t;
        let std_err = 2.0 * sqrt_t.max(se_sqrt) * se_sqrt;
        if t_hat > 1.0 + PHYSICAL_SIGMAS * std_err {
            return Err(PostprocessError::NonPhysical { player: k, what: "T", value: t_hat, sigma: std_err });
        }
        for i in 0..m {
            rx[i] -= sqrt_t * x[i];
            rp[i] -= sqrt_t * p[i];
        }
        announced_sum += mo.var_x / batch.n0;
        players.push(TransmittanceEstimate {
            player: k,
            sqrt_t_hat: sqrt_t,
            t_hat,
            std_err,
            announced_variance: mo.var_x / batch.n0,
        });
    }
    let residual = stats::pooled([(rx.as_slice(), rx.as_slice()), (rp.as_slice(), rp.as_slice())]);
    Ok(EstimationReport {
        players,
        v_a_hat: announced_sum / batch.players() as f64,
        epsilon_hat: residual.var_y / batch.n0 - 1.0 - model::chi_het(params),
        samples: m,
    })
}

/// Displaced records on a subset, with the honest player's symbols kept
/// alongside for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub honest: usize,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub honest_x: Vec<f64>,
    pub honest_p: Vec<f64>,
}

/// `x_R = x_d' − Σ_{k≠j} √T̂_k·x_k` (and likewise for `p`) on `indices`.
pub fn displace(batch: &TrialBatch, sqrt_t_hat: &[f64], honest: usize, indices: &[usize]) -> Result<Residuals, PostprocessError> {
    let n = batch.players();
    if sqrt_t_hat.len() != n {
        return Err(PostprocessError::MissingAnnouncements { expected: n, got: sqrt_t_hat.len() });
    }
    if honest == 0 || honest > n {
        return Err(PostprocessError::KeyRate(KeyRateError::Param(model::ParamError::PlayerIndex { index: honest, players: n })));
    }
    let (mut x, mut p) = (gather(&batch.normalized.x, indices), gather(&batch.normalized.p, indices));
    for k in (1..=n).filter(|&k| k != honest) {
        let s = sqrt_t_hat[k - 1];
        let (xs, ps) = batch.symbols.player(k);
        for (o, &i) in indices.iter().enumerate() {
            x[o] -= s * xs[i];
            p[o] -= s * ps[i];
        }
    }
    let (hx, hp) = batch.symbols.player(honest);
    Ok(Residuals { honest, x, p, honest_x: gather(hx, indices), honest_p: gather(hp, indices) })
}

/// Moment estimates for one honest-player hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerEstimate {
    pub honest: usize,
    pub samples: usize,
    pub v_a_hat: f64,
    pub t_hat: f64,
    pub t_std_err: f64,
    /// Excess noise referred to the honest player's input, SNU.
    pub xi_hat: f64,
    pub xi_std_err: f64,
    pub rate: PlayerRate,
}

/// Rate from estimated channel parameters; the same function as the
/// analytic path.
pub fn rate_from_estimates(
    honest: usize,
    v_a: f64,
    t: f64,
    xi: f64,
    params: &SystemParams,
) -> Result<PlayerRate, KeyRateError> {
    keyrate::rate_for_channel(honest, v_a, Channel { transmittance: t, excess_noise: xi }, params)
}

/// Inverts the two-party model on displaced records:
/// `V̂_A = Var(x_j)/N₀`, `√T̂_j` = regression slope of `x_R` on `x_j`, and
/// `ξ̂ = (Var(x_R − √T̂_j x_j)/N₀ − 1 − χ_het) / T̂_j`.
///
/// `ξ̂ < −3σ` or `T̂_j > 1 + 3σ` aborts; a slightly negative `ξ̂` within the
/// tolerance is set to zero.
pub fn estimate_per_player_rate(
    residuals: &Residuals,
    params: &SystemParams,
    min_samples: usize,
) -> Result<PlayerEstimate, PostprocessError> {
    let j = residuals.honest;
    let m = residuals.x.len();
    if m < min_samples.max(3) {
        return Err(PostprocessError::InsufficientSamples { stage: "per-player estimation", needed: min_samples.max(3), got: m });
    }
    let n0 = params.n0;
    let mo = stats::pooled([
        (residuals.x.as_slice(), residuals.honest_x.as_slice()),
        (residuals.p.as_slice(), residuals.honest_p.as_slice()),
    ]);
    if !(mo.var_x > 0.0) {
        return Err(PostprocessError::ZeroVariance { player: j });
    }
    let dof = (mo.n - 2) as f64;
    let v_a_hat = mo.var_x / n0;
    let slope = mo.cov / mo.var_x;
    let resid_var = (mo.var_y - mo.cov * mo.cov / mo.var_x).max(0.0);
    let slope_se = (resid_var / (mo.var_x * dof)).sqrt();
    if slope < -PHYSICAL_SIGMAS * slope_se {
        return Err(PostprocessError::NonPhysical { player: j, what: "√T", value: slope, sigma: slope_se });
    }
    let t_hat = slope * slope;
    let t_std_err = 2.0 * slope.abs().max(slope_se) * slope_se;
    if t_hat > 1.0 + PHYSICAL_SIGMAS * t_std_err {
        return Err(PostprocessError::NonPhysical { player: j, what: "T", value: t_hat, sigma: t_std_err });
    }
    if !(t_hat > 0.0) {
        return Err(PostprocessError::NonPhysical { player: j, what: "T", value: t_hat, sigma: t_std_err });
    }
    let w = resid_var / n0;
    let chi_het = model::chi_het(params);
    let xi_raw = (w - 1.0 - chi_het) / t_hat;
    let xi_std_err = w * (2.0 / dof).sqrt() / t_hat;
    if xi_raw < -PHYSICAL_SIGMAS * xi_std_err {
        return Err(PostprocessError::NonPhysical { player: j, what: "excess noise", value: xi_raw, sigma: xi_std_err });
    }
    let xi_hat = xi_raw.max(0.0);
    let rate = rate_from_estimates(j, v_a_hat, t_hat, xi_hat, params)?;
    Ok(PlayerEstimate { honest: j, samples: m, v_a_hat, t_hat, t_std_err, xi_hat, xi_std_err, rate })
}

/// Index partition of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub transmittance: DisclosureSet,
    /// Disclosed subset of each per-player round, in player order.
    pub rounds: Vec<DisclosureSet>,
    /// Undisclosed pulses of each round: the key material.
    pub key_material: Vec<Vec<usize>>,
}

impl Partition {
    /// Checks that no pulse is used twice.
    pub fn is_disjoint(&self, pulses: usize) -> bool {
        let mut seen = vec![false; pulses];
        let all = self
            .rounds
            .iter()
            .map(|d| d.indices.as_slice())
            .chain(self.key_material.iter().map(Vec::as_slice))
            .chain(core::iter::once(self.transmittance.indices.as_slice()));
        for set in all {
            for &i in set {
                if i >= pulses || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        true
    }
}

/// Randomly partitions `0..pulses` using the batch seed's disclosure stream.
pub fn partition(pulses: usize, players: usize, seed: u64, cfg: &PostprocessConfig) -> Result<Partition, PostprocessError> {
    cfg.validate(players)?;
    let mut order: Vec<usize> = (0..pulses).collect();
    order.shuffle(&mut Substreams::new(seed).stream(Purpose::Disclosure, 0, 0));
    let n_t = (pulses as f64 * cfg.transmittance_fraction).round() as usize;
    let rest = pulses - n_t;
    let weights = cfg.round_weights.clone().unwrap_or_else(|| vec![1.0; players]);
    let total: f64 = weights.iter().sum();
    let mut cursor = n_t;
    let mut acc = 0.0;
    let (mut rounds, mut key_material) = (Vec::with_capacity(players), Vec::with_capacity(players));
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        let end = if j + 1 == players { pulses } else { n_t + (rest as f64 * acc / total).round() as usize };
        let sub = &order[cursor..end];
        let disclosed = (sub.len() as f64 * cfg.disclosure_fraction).round() as usize;
        rounds.push(DisclosureSet::all_players(sub[..disclosed].to_vec(), players, DisclosurePurpose::PlayerRound(j + 1)));
        key_material.push(sub[disclosed..].to_vec());
        cursor = end;
    }
    let transmittance = DisclosureSet::all_players(order[..n_t].to_vec(), players, DisclosurePurpose::TransmittanceEstimation);
    Ok(Partition { transmittance, rounds, key_material })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Abort {
    /// The empirical rate of this honest-player hypothesis is not positive.
    NoKey { player: usize, rate: f64 },
}

/// Empirical outcome of a full round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub partition: Partition,
    pub estimation: EstimationReport,
    pub players: Vec<PlayerEstimate>,
    pub report: KeyRateReport,
    pub abort: Option<Abort>,
}

/// Runs transmittance estimation and every per-player round on disjoint
/// subsets and takes the minimum rate.
pub fn qss_round(
    batch: &TrialBatch,
    params: &SystemParams,
    layout: &NetworkLayout,
    cfg: &PostprocessConfig,
) -> Result<RoundReport, PostprocessError> {
    check_players(batch, layout)?;
    params.validate().map_err(KeyRateError::from)?;
    let n = layout.players();
    let partition = partition(batch.pulses(), n, batch.seed, cfg)?;
    assert!(partition.is_disjoint(batch.pulses()), "disclosed pulses overlap key material");
    let estimation = estimate_transmittance(batch, &partition.transmittance, params, cfg.min_samples)?;
    let sqrt_t = estimation.sqrt_t_hat();
    let players = partition
        .rounds
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let r = displace(batch, &sqrt_t, i + 1, &d.indices)?;
            estimate_per_player_rate(&r, params, cfg.min_samples)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let v_a: Vec<f64> = players.iter().map(|p| p.v_a_hat).collect();
    let report = KeyRateReport::from_rates(ModulationPolicy::PerPlayer(v_a), players.iter().map(|p| p.rate.clone()).collect());
    assert!(players.iter().all(|p| report.rate <= p.rate.rate));
    let abort = players
        .iter()
        .find(|p| p.rate.rate <= 0.0)
        .map(|p| Abort::NoKey { player: p.honest, rate: p.rate.rate });
    Ok(RoundReport { partition, estimation, players, report, abort })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShareError {
    #[error("at least one key is required")]
    NoKeys,
    #[error("key {index} has {got} bytes, message has {expected}")]
    Length { index: usize, expected: usize, got: usize },
}

fn xor_all<K: AsRef<[u8]>>(data: &[u8], keys: &[K]) -> Result<Vec<u8>, ShareError> {
    if keys.is_empty() {
        return Err(ShareError::NoKeys);
    }
    let mut out = data.to_vec();
    for (i, k) in keys.iter().enumerate() {
        let k = k.as_ref();
        if k.len() != out.len() {
            return Err(ShareError::Length { index: i + 1, expected: out.len(), got: k.len() });
        }
        out.iter_mut().zip(k).for_each(|(o, b)| *o ^= b);
    }
    Ok(out)
}

/// Broadcast `E = M ⊕ K₁ ⊕ … ⊕ K_n`.
pub fn share<K: AsRef<[u8]>>(message: &[u8], keys: &[K]) -> Result<Vec<u8>, ShareError> {
    xor_all(message, keys)
}

/// `M = E ⊕ K₁ ⊕ … ⊕ K_n`. With a key missing, the result is `M ⊕ K_missing`.
pub fn recover<K: AsRef<[u8]>>(broadcast: &[u8], keys: &[K]) -> Result<Vec<u8>, ShareError> {
    xor_all(broadcast, keys)
}
