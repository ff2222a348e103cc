//! Asymptotic secure key rate with reverse reconciliation and a trusted
//! heterodyne detector.
//!
//! For the honest player `j` the dealer sees a two-party GMCS channel with
//! transmittance `T_j` and input-referred noise `χ_line`; all other players
//! are lumped into the channel. The per-player rate is
//! `R_j = f·I_AB − χ_BE` and the secret-sharing rate is `min_j R_j`.
//!
//! Rates are in bits per pulse and are returned unclamped.

use alloc::vec::Vec;
use thiserror::Error;

use crate::model::{self, NetworkLayout, ParamError, SystemParams};

/// Tolerance below zero accepted by [`g_func`] before reporting an error.
pub const G_TOLERANCE: f64 = 1e-12;
/// Relative tolerance on negative discriminants and on `λ² < 1`.
pub const CLAMP_TOLERANCE: f64 = 1e-9;
/// Discriminants below this fraction of `C²` are rounding noise around a
/// double root and are snapped to zero.
const DOUBLE_ROOT_SNAP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KeyRateError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("unphysical argument {value} to G(x)")]
    NegativeEntropyArgument { value: f64 },
    #[error("unphysical channel: {what} = {value}")]
    Unphysical { what: &'static str, value: f64 },
    #[error("modulation variance must be positive, got {0}")]
    Modulation(f64),
    #[error("expected {expected} per-player modulation variances, got {got}")]
    PolicyLength { expected: usize, got: usize },
}

/// `G(x) = (x+1) log₂(x+1) − x log₂ x`, the entropy of a thermal state with
/// mean photon number `x`.
pub fn g_func(x: f64) -> Result<f64, KeyRateError> {
    if x.is_nan() || x < -G_TOLERANCE {
        return Err(KeyRateError::NegativeEntropyArgument { value: x });
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// Shannon information between the honest player and the dealer when both
/// quadratures carry key: `log₂((V + χ_tot) / (1 + χ_tot))`, `V = V_A + 1`.
pub fn mutual_information(v_a: f64, chi_tot: f64) -> f64 {
    let v = v_a + 1.0;
    ((v + chi_tot) / (1.0 + chi_tot)).log2()
}

/// Additional per-station excess noise from residual phase error.
pub fn phase_noise_excess(v_a: f64, delta: f64) -> f64 {
    v_a * delta
}

fn unphysical(what: &'static str, value: f64) -> KeyRateError {
    KeyRateError::Unphysical { what, value }
}

fn clamp_square(what: &'static str, sq: f64) -> Result<f64, KeyRateError> {
    if !(sq >= 1.0 - CLAMP_TOLERANCE) {
        return Err(unphysical(what, sq));
    }
    Ok(sq.max(1.0))
}

/// Symplectic eigenvalues `(λ₁, λ₂)` of the two-mode state shared by the
/// honest player and the dealer's input.
///
/// Uses `A = V²(1−2T) + 2T + T²(V+χ)²` and `B = T²(Vχ+1)²` in the
/// equivalent forms `A = (V − b)² + 2√B`, `A² − 4B = (V − b)²((V − b)² + 4√B)`
/// with `b = T(V + χ)`, which stay exact in the pure-state limit.
pub fn symplectic_12(v: f64, t: f64, chi_line: f64) -> Result<(f64, f64), KeyRateError> {
    if !(v >= 1.0) {
        return Err(unphysical("V", v));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(unphysical("T", t));
    }
    if !(chi_line >= 0.0) || !chi_line.is_finite() {
        return Err(unphysical("chi_line", chi_line));
    }
    let b = t * (v + chi_line);
    let d = v - b;
    let sqrt_b = t * (v * chi_line + 1.0);
    let a = d * d + 2.0 * sqrt_b;
    let disc = d * d * (d * d + 4.0 * sqrt_b);
    let l1_sq = 0.5 * (a + disc.sqrt());
    let l2_sq = sqrt_b * sqrt_b / l1_sq;
    let l1_sq = clamp_square("lambda_1^2", l1_sq)?;
    let l2_sq = clamp_square("lambda_2^2", l2_sq)?;
    Ok((l1_sq.sqrt(), l2_sq.sqrt()))
}

/// Symplectic eigenvalues `(λ₃, λ₄)` of the state conditioned on the
/// dealer's heterodyne outcome, with detector loss and electronic noise
/// purified inside the trusted station.
pub fn symplectic_34(
    v: f64,
    t: f64,
    chi_line: f64,
    chi_het: f64,
    chi_tot: f64,
) -> Result<(f64, f64), KeyRateError> {
    if !(v >= 1.0) {
        return Err(unphysical("V", v));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(unphysical("T", t));
    }
    if !(chi_line >= 0.0) || !chi_line.is_finite() {
        return Err(unphysical("chi_line", chi_line));
    }
    if !(chi_het >= 1.0 - CLAMP_TOLERANCE) {
        return Err(unphysical("chi_het", chi_het));
    }
    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) * (v + chi_line);
    let sqrt_b = t * (v * chi_line + 1.0);
    let b = sqrt_b * sqrt_b;
    let denom = t * (v + chi_tot);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * sqrt_b + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0))
        / (denom * denom);
    let ratio = (v + sqrt_b * chi_het) / denom;
    let d = ratio * ratio;
    let mut disc = c * c - 4.0 * d;
    if disc < -CLAMP_TOLERANCE * c * c {
        return Err(unphysical("C^2 - 4D", disc));
    }
    if disc <= DOUBLE_ROOT_SNAP * c * c {
        disc = 0.0;
    }
    let l3_sq = 0.5 * (c + disc.sqrt());
    let l4_sq = if disc == 0.0 { l3_sq } else { d / l3_sq };
    let l3_sq = clamp_square("lambda_3^2", l3_sq)?;
    let l4_sq = clamp_square("lambda_4^2", l4_sq)?;
    Ok((l3_sq.sqrt(), l4_sq.sqrt()))
}

/// Eve's Holevo information on the dealer's data,
/// `Σ_{i≤2} G((λ_i−1)/2) − Σ_{3≤i≤5} G((λ_i−1)/2)`.
pub fn holevo_bound(lambda: &[f64; 5]) -> Result<f64, KeyRateError> {
    let g = |l: f64| g_func((l - 1.0) / 2.0);
    Ok(g(lambda[0])? + g(lambda[1])? - g(lambda[2])? - g(lambda[3])? - g(lambda[4])?)
}

/// Channel seen by one honest player: transmittance and total excess noise
/// `Σ_k ε_k` referred to that player's input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub transmittance: f64,
    pub excess_noise: f64,
}

/// Full breakdown of one two-party rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRate {
    pub honest: usize,
    pub v_a: f64,
    pub transmittance: f64,
    pub chi_line: f64,
    pub chi_het: f64,
    pub chi_tot: f64,
    pub mutual_information: f64,
    pub lambda: [f64; 5],
    pub holevo: f64,
    pub rate: f64,
}

/// Two-party rate for an explicit channel. Shared by the analytic path and
/// the estimator, so identical inputs give identical rates.
pub fn rate_for_channel(
    honest: usize,
    v_a: f64,
    channel: Channel,
    params: &SystemParams,
) -> Result<PlayerRate, KeyRateError> {
    if !(v_a > 0.0) || !v_a.is_finite() {
        return Err(KeyRateError::Modulation(v_a));
    }
    let t = channel.transmittance;
    if !(t > 0.0) {
        return Err(unphysical("T", t));
    }
    let chi_het = model::chi_het(params);
    let chi_line = 1.0 / t - 1.0 + channel.excess_noise;
    let chi_tot = chi_line + chi_het / t;
    let v = v_a + 1.0;
    let (l1, l2) = symplectic_12(v, t, chi_line)?;
    let (l3, l4) = symplectic_34(v, t, chi_line, chi_het, chi_tot)?;
    let lambda = [l1, l2, l3, l4, 1.0];
    let holevo = holevo_bound(&lambda)?;
    let mutual_information = mutual_information(v_a, chi_tot);
    Ok(PlayerRate {
        honest,
        v_a,
        transmittance: t,
        chi_line,
        chi_het,
        chi_tot,
        mutual_information,
        lambda,
        holevo,
        rate: params.f_rec * mutual_information - holevo,
    })
}

/// Modulation variance used by each player.
#[derive(Debug, Clone, PartialEq)]
pub enum ModulationPolicy {
    Shared(f64),
    /// `values[k - 1]` for player `k`.
    PerPlayer(Vec<f64>),
}

impl ModulationPolicy {
    pub fn for_player(&self, k: usize) -> f64 {
        match self {
            ModulationPolicy::Shared(v) => *v,
            ModulationPolicy::PerPlayer(v) => v[k - 1],
        }
    }

    fn check(&self, players: usize) -> Result<(), KeyRateError> {
        match self {
            ModulationPolicy::Shared(v) if !(*v > 0.0) || !v.is_finite() => Err(KeyRateError::Modulation(*v)),
            ModulationPolicy::PerPlayer(v) if v.len() != players => {
                Err(KeyRateError::PolicyLength { expected: players, got: v.len() })
            }
            ModulationPolicy::PerPlayer(v) => match v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                Some(bad) => Err(KeyRateError::Modulation(*bad)),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

fn player_rate_with(
    layout: &NetworkLayout,
    params: &SystemParams,
    policy: &ModulationPolicy,
    honest: usize,
) -> Result<PlayerRate, KeyRateError> {
    let budget = model::noise_budget_with(layout, params, honest, |k| policy.for_player(k))?;
    let channel = Channel {
        transmittance: budget.transmittance,
        excess_noise: budget.excess_noise(),
    };
    rate_for_channel(honest, policy.for_player(honest), channel, params)
}

/// Detailed rate for honest player `honest` with a shared `v_a`.
pub fn player_rate(
    layout: &NetworkLayout,
    params: &SystemParams,
    v_a: f64,
    honest: usize,
) -> Result<PlayerRate, KeyRateError> {
    player_rate_with(layout, params, &ModulationPolicy::Shared(v_a), honest)
}

/// `R_j = f·I_AB − χ_BE` for honest player `honest`.
pub fn key_rate(layout: &NetworkLayout, params: &SystemParams, v_a: f64, honest: usize) -> Result<f64, KeyRateError> {
    Ok(player_rate(layout, params, v_a, honest)?.rate)
}

/// Rates for every honest-player hypothesis and their minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    pub modulation: ModulationPolicy,
    pub per_player: Vec<PlayerRate>,
    pub rate: f64,
    /// Player attaining the minimum (first one on ties).
    pub limiting_player: usize,
}

impl KeyRateReport {
    pub fn from_rates(modulation: ModulationPolicy, per_player: Vec<PlayerRate>) -> Self {
        let (rate, limiting_player) = per_player
            .iter()
            .fold((f64::INFINITY, 0), |(best, arg), r| if r.rate < best { (r.rate, r.honest) } else { (best, arg) });
        Self { modulation, per_player, rate, limiting_player }
    }

    pub fn limiting(&self) -> &PlayerRate {
        &self.per_player[self.limiting_player - 1]
    }

    /// `max(R, 0)`.
    pub fn clamped_rate(&self) -> f64 {
        self.rate.max(0.0)
    }
}

/// Secret-sharing rate `R = min_j R_j`.
pub fn qss_rate(
    layout: &NetworkLayout,
    params: &SystemParams,
    modulation: &ModulationPolicy,
) -> Result<KeyRateReport, KeyRateError> {
    modulation.check(layout.players())?;
    let per_player = (1..=layout.players())
        .map(|j| player_rate_with(layout, params, modulation, j))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KeyRateReport::from_rates(modulation.clone(), per_player))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ideal() -> SystemParams {
        SystemParams { gamma: 0.0, epsilon0: 0.0, eta_d: 1.0, nu_el: 0.0, f_rec: 1.0, ..SystemParams::default() }
    }

    #[test]
    fn g_values() {
        assert_eq!(g_func(0.0).unwrap(), 0.0);
        assert_eq!(g_func(-1e-13).unwrap(), 0.0);
        assert_relative_eq!(g_func(1.0).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(g_func(3.0).unwrap(), 8.0 - 3.0 * 3f64.log2(), max_relative = 1e-15);
        assert_relative_eq!(g_func(3.0).unwrap(), 3.245_112_497_836_532, max_relative = 1e-14);
        assert!(matches!(g_func(-1e-6), Err(KeyRateError::NegativeEntropyArgument { .. })));
        assert!(g_func(f64::NAN).is_err());
    }

    #[test]
    fn mutual_information_values() {
        assert_relative_eq!(mutual_information(4.0, 1.0), 3f64.log2(), max_relative = 1e-15);
        assert_relative_eq!(mutual_information(4.0, 0.0), 2.321_928_094_887_362, max_relative = 1e-15);
        assert_eq!(mutual_information(0.0, 3.0), 0.0);
    }

    #[test]
    fn phase_noise_values() {
        assert_relative_eq!(phase_noise_excess(4.0, 1e-3), 0.004, max_relative = 1e-15);
        assert_eq!(phase_noise_excess(4.0, 0.0), 0.0);
        assert_relative_eq!(phase_noise_excess(10.0, 1e-4), 0.001, max_relative = 1e-15);
    }

    #[test]
    fn pure_channel_eigenvalues() {
        for v in [1.0, 2.5, 5.0, 101.0] {
            assert_eq!(symplectic_12(v, 1.0, 0.0).unwrap(), (1.0, 1.0));
            let (l3, l4) = symplectic_34(v, 1.0, 0.0, 1.0, 1.0).unwrap();
            assert!((l3 - 1.0).abs() < 1e-15 && (l4 - 1.0).abs() < 1e-15, "{l3} {l4}");
        }
    }

    #[test]
    fn negative_line_noise_rejected() {
        assert!(symplectic_12(5.0, 0.5, -1.0 / 5.0).is_err());
        // below the vacuum floor 1/T - 1 the state is unphysical
        assert!(symplectic_12(5.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn holevo_of_vacuum_is_zero() {
        assert_eq!(holevo_bound(&[1.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn lossless_ideal_limit() {
        let layout = NetworkLayout::equal_spacing(1, 0.0).unwrap();
        for v_a in [0.5, 3.0, 4.0, 37.2, 999.0] {
            let r = player_rate(&layout, &ideal(), v_a, 1).unwrap();
            assert!(r.holevo.abs() <= 1e-12, "chi_BE = {}", r.holevo);
            assert!((r.rate - ((v_a + 2.0) / 2.0).log2()).abs() <= 1e-12);
        }
        assert!((key_rate(&layout, &ideal(), 2.0, 1).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn no_modulation_no_key() {
        let layout = NetworkLayout::equal_spacing(2, 10.0).unwrap();
        // Eve still holds the purification of the excess noise, so the rate
        // is negative rather than zero
        let r = player_rate(&layout, &SystemParams::default(), 1e-9, 1).unwrap();
        assert!(r.mutual_information < 1e-8);
        assert!(r.rate < 0.0 && r.holevo > 0.0, "{}", r.rate);
        assert!(key_rate(&layout, &SystemParams::default(), 0.0, 1).is_err());
    }

    #[test]
    fn farthest_player_limits_pair() {
        let layout = NetworkLayout::equal_spacing(2, 10.0).unwrap();
        let report = qss_rate(&layout, &SystemParams::default(), &ModulationPolicy::Shared(4.0)).unwrap();
        assert_eq!(report.limiting_player, 1);
        assert!(report.per_player[0].rate < report.per_player[1].rate);
        assert!(report.per_player.iter().all(|r| report.rate <= r.rate));
        assert_eq!(report.per_player[0].lambda[4], 1.0);
    }

    #[test]
    fn single_player_report() {
        let layout = NetworkLayout::equal_spacing(1, 25.0).unwrap();
        let p = SystemParams::default();
        let report = qss_rate(&layout, &p, &ModulationPolicy::Shared(4.0)).unwrap();
        assert_eq!(report.rate, key_rate(&layout, &p, 4.0, 1).unwrap());
        assert_eq!(report.limiting_player, 1);
    }

    #[test]
    fn per_player_policy() {
        let layout = NetworkLayout::equal_spacing(3, 10.0).unwrap();
        let p = SystemParams::default();
        let shared = qss_rate(&layout, &p, &ModulationPolicy::Shared(4.0)).unwrap();
        let per = qss_rate(&layout, &p, &ModulationPolicy::PerPlayer(vec![4.0; 3])).unwrap();
        assert_eq!(shared.per_player, per.per_player);
        assert!(matches!(
            qss_rate(&layout, &p, &ModulationPolicy::PerPlayer(vec![4.0; 2])),
            Err(KeyRateError::PolicyLength { .. })
        ));
    }

    #[test]
    fn rate_is_bit_stable() {
        let layout = NetworkLayout::equal_spacing(20, 13.0).unwrap();
        let p = SystemParams { delta: 1e-4, ..SystemParams::default() };
        let a = qss_rate(&layout, &p, &ModulationPolicy::Shared(4.2)).unwrap();
        let b = qss_rate(&layout, &p, &ModulationPolicy::Shared(4.2)).unwrap();
        assert_eq!(a.rate.to_bits(), b.rate.to_bits());
    }

    proptest! {
        #[test]
        fn g_is_increasing(x in 0.0f64..1e3, dx in 1e-6f64..10.0) {
            prop_assert!(g_func(x + dx).unwrap() > g_func(x).unwrap());
        }

        #[test]
        fn information_monotone(v_a in 0.01f64..100.0, chi in 0.0f64..50.0, d in 0.01f64..5.0) {
            prop_assert!(mutual_information(v_a + d, chi) > mutual_information(v_a, chi));
            prop_assert!(mutual_information(v_a, chi + d) < mutual_information(v_a, chi));
        }

        #[test]
        fn eigenvalues_physical(
            v_a in 0.01f64..100.0, log_t in -3.0f64..0.0, eps in 0.0f64..2.0,
            eta in 0.05f64..1.0, nu in 0.0f64..0.5,
        ) {
            let p = SystemParams { eta_d: eta, nu_el: nu, ..SystemParams::default() };
            let r = rate_for_channel(1, v_a, Channel { transmittance: 10f64.powf(log_t), excess_noise: eps }, &p).unwrap();
            prop_assert!(r.lambda.iter().all(|&l| l >= 1.0));
            prop_assert!(r.lambda[0] >= r.lambda[1] && r.lambda[2] >= r.lambda[3]);
            prop_assert!(r.holevo >= -1e-12);
        }
    }
}
