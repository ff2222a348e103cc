//! Protocol parameters, network geometry and the noise budget.
//!
//! All noise quantities are in shot-noise units (SNU) and, unless stated
//! otherwise, referred to the channel input of the honest player, i.e. the
//! player the dealer is currently treating as its QKD partner.
//!
//! Players are indexed from 1. Player 1 is the farthest from the dealer and
//! player `n` the closest.

use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter `{name}` = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("player index {index} out of range 1..={players}")]
    PlayerIndex { index: usize, players: usize },
    #[error("layout needs at least one player")]
    NoPlayers,
    #[error("player distances must be non-increasing in the player index (l_{index} > l_{prev})")]
    DistanceOrder { index: usize, prev: usize },
    #[error("honest player {0} has zero transmittance")]
    ZeroTransmittance(usize),
}

fn check(name: &'static str, value: f64, ok: bool, expected: &'static str) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { name, value, expected })
    }
}

/// Physical and detector parameters shared by every player.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SystemParams {
    /// Fiber attenuation, dB/km.
    pub gamma: f64,
    /// Excess noise added by each player, SNU, referred to that player's own station.
    pub epsilon0: f64,
    /// Electronic noise of the dealer's detector, SNU.
    pub nu_el: f64,
    /// Detector efficiency.
    #[cfg_attr(feature = "serde", serde(rename = "eta_D"))]
    pub eta_d: f64,
    /// Reconciliation efficiency.
    pub f_rec: f64,
    /// Transmittance of the injection beam splitter at each player's station.
    #[cfg_attr(feature = "serde", serde(rename = "t_B"))]
    pub t_b: f64,
    /// Residual phase-noise variance at each station, rad².
    pub delta: f64,
    /// Shot-noise variance in absolute quadrature units.
    #[cfg_attr(feature = "serde", serde(rename = "N0"))]
    pub n0: f64,
}

impl Default for SystemParams {
    /// Reference operating point: 0.2 dB/km fiber, ε₀ = 0.01, ν_el = 0.1,
    /// η_D = 0.5, f = 0.95, lossless splitters, no phase noise, N₀ = 1/4.
    fn default() -> Self {
        Self {
            gamma: 0.2,
            epsilon0: 0.01,
            nu_el: 0.1,
            eta_d: 0.5,
            f_rec: 0.95,
            t_b: 1.0,
            delta: 0.0,
            n0: 0.25,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check("gamma", self.gamma, self.gamma >= 0.0, ">= 0")?;
        check("epsilon0", self.epsilon0, self.epsilon0 >= 0.0, ">= 0")?;
        check("nu_el", self.nu_el, self.nu_el >= 0.0, ">= 0")?;
        check("eta_D", self.eta_d, self.eta_d > 0.0 && self.eta_d <= 1.0, "(0, 1]")?;
        check("f_rec", self.f_rec, self.f_rec > 0.0 && self.f_rec <= 1.0, "(0, 1]")?;
        check("t_B", self.t_b, self.t_b > 0.0 && self.t_b <= 1.0, "(0, 1]")?;
        check("delta", self.delta, self.delta >= 0.0, ">= 0")?;
        check("N0", self.n0, self.n0 > 0.0, "> 0")?;
        Ok(())
    }
}

/// Fiber distances from the dealer to each player.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    distances: Vec<f64>,
}

impl NetworkLayout {
    /// Players spread evenly between the dealer and the farthest player:
    /// `l_k = (n - k + 1) L / n`.
    pub fn equal_spacing(players: usize, length_km: f64) -> Result<Self, ParamError> {
        if players == 0 {
            return Err(ParamError::NoPlayers);
        }
        check("length_km", length_km, length_km >= 0.0, ">= 0")?;
        let n = players as f64;
        let distances = (1..=players)
            .map(|k| (players - k + 1) as f64 * length_km / n)
            .collect();
        Ok(Self { distances })
    }

    /// Explicit per-player distances, `distances[0]` being player 1.
    pub fn with_distances(distances: Vec<f64>) -> Result<Self, ParamError> {
        if distances.is_empty() {
            return Err(ParamError::NoPlayers);
        }
        for &d in &distances {
            check("distance_km", d, d >= 0.0, ">= 0")?;
        }
        for (i, w) in distances.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(ParamError::DistanceOrder { index: i + 2, prev: i + 1 });
            }
        }
        Ok(Self { distances })
    }

    pub fn players(&self) -> usize {
        self.distances.len()
    }

    /// Distance of the farthest player.
    pub fn length_km(&self) -> f64 {
        self.distances[0]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn distance(&self, k: usize) -> Result<f64, ParamError> {
        self.check_index(k)?;
        Ok(self.distances[k - 1])
    }

    pub(crate) fn check_index(&self, k: usize) -> Result<(), ParamError> {
        if k == 0 || k > self.players() {
            Err(ParamError::PlayerIndex { index: k, players: self.players() })
        } else {
            Ok(())
        }
    }
}

/// Overall transmittance from player `k` to the dealer.
///
/// Player `k`'s signal crosses the `n - k` downstream injection splitters,
/// so `T_k = t_B^(n-k) · 10^(-γ l_k / 10)`.
pub fn transmittance(layout: &NetworkLayout, params: &SystemParams, k: usize) -> Result<f64, ParamError> {
    let l = layout.distance(k)?;
    let fiber = 10f64.powf(-params.gamma * l / 10.0);
    let crossings = layout.players() - k;
    if crossings == 0 {
        Ok(fiber)
    } else {
        Ok(fiber * params.t_b.powi(crossings as i32))
    }
}

/// All transmittances, index 0 holding player 1.
pub fn transmittances(layout: &NetworkLayout, params: &SystemParams) -> Vec<f64> {
    (1..=layout.players())
        .map(|k| transmittance(layout, params, k).expect("index in range"))
        .collect()
}

/// Per-station excess noise including the phase-noise contribution `V_A·δ`
/// when a modulation variance is supplied.
pub fn station_excess_noise(params: &SystemParams, v_a: Option<f64>) -> f64 {
    match v_a {
        Some(v_a) => params.epsilon0 + crate::keyrate::phase_noise_excess(v_a, params.delta),
        None => params.epsilon0,
    }
}

/// Excess noise of player `k` referred to the channel input of the honest
/// player `j`: `ε_k = (T_k / T_j) ε₀`.
pub fn excess_noise_referred(
    layout: &NetworkLayout,
    params: &SystemParams,
    honest: usize,
    k: usize,
    v_a: Option<f64>,
) -> Result<f64, ParamError> {
    let t_j = transmittance(layout, params, honest)?;
    let t_k = transmittance(layout, params, k)?;
    if t_j <= 0.0 {
        return Err(ParamError::ZeroTransmittance(honest));
    }
    Ok(t_k / t_j * station_excess_noise(params, v_a))
}

/// Noise added by the trusted heterodyne detector, referred to its input:
/// `[1 + (1 - η_D) + 2 ν_el] / η_D`.
pub fn chi_het(params: &SystemParams) -> f64 {
    (1.0 + (1.0 - params.eta_d) + 2.0 * params.nu_el) / params.eta_d
}

/// Noise contributions seen by the dealer when player `honest` is the QKD
/// partner and every other player is treated as part of the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBudget {
    pub honest: usize,
    /// `T_j` of the honest player.
    pub transmittance: f64,
    pub chi_het: f64,
    /// Per-player excess noise referred to the honest player's input.
    pub epsilon: Vec<f64>,
    pub chi_line: f64,
    pub chi_tot: f64,
}

impl NoiseBudget {
    /// Total player excess noise `Σ ε_k`.
    pub fn excess_noise(&self) -> f64 {
        self.epsilon.iter().sum()
    }
}

/// Noise budget for a shared modulation variance `v_a`.
pub fn noise_budget(
    layout: &NetworkLayout,
    params: &SystemParams,
    honest: usize,
    v_a: f64,
) -> Result<NoiseBudget, ParamError> {
    noise_budget_with(layout, params, honest, |_| v_a)
}

/// Noise budget where player `k` modulates with `v_a(k)`.
pub fn noise_budget_with(
    layout: &NetworkLayout,
    params: &SystemParams,
    honest: usize,
    v_a: impl Fn(usize) -> f64,
) -> Result<NoiseBudget, ParamError> {
    params.validate()?;
    layout.check_index(honest)?;
    let t = transmittances(layout, params);
    let t_j = t[honest - 1];
    if t_j <= 0.0 {
        return Err(ParamError::ZeroTransmittance(honest));
    }
    let epsilon: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(i, &t_k)| t_k / t_j * station_excess_noise(params, Some(v_a(i + 1))))
        .collect();
    let chi_het = chi_het(params);
    let chi_line = 1.0 / t_j - 1.0 + epsilon.iter().sum::<f64>();
    Ok(NoiseBudget {
        honest,
        transmittance: t_j,
        chi_het,
        epsilon,
        chi_line,
        chi_tot: chi_line + chi_het / t_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn baseline() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn transmittance_matches_fiber_formula() {
        let layout = NetworkLayout::equal_spacing(2, 50.0).unwrap();
        let p = baseline();
        assert_relative_eq!(transmittance(&layout, &p, 1).unwrap(), 0.1, max_relative = 1e-15);
        assert_relative_eq!(
            transmittance(&layout, &p, 2).unwrap(),
            0.316_227_766_016_837_94,
            max_relative = 1e-15
        );
    }

    #[test]
    fn zero_attenuation_is_lossless() {
        let layout = NetworkLayout::equal_spacing(7, 80.0).unwrap();
        let p = SystemParams { gamma: 0.0, ..baseline() };
        for k in 1..=7 {
            assert_eq!(transmittance(&layout, &p, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn splitter_losses_apply_downstream() {
        let layout = NetworkLayout::equal_spacing(3, 0.0).unwrap();
        let p = SystemParams { t_b: 0.9, ..baseline() };
        let t = transmittances(&layout, &p);
        assert_relative_eq!(t[0], 0.81, max_relative = 1e-15);
        assert_relative_eq!(t[1], 0.9, max_relative = 1e-15);
        assert_eq!(t[2], 1.0);
    }

    #[test]
    fn index_out_of_range() {
        let layout = NetworkLayout::equal_spacing(2, 10.0).unwrap();
        assert!(matches!(
            transmittance(&layout, &baseline(), 0),
            Err(ParamError::PlayerIndex { index: 0, players: 2 })
        ));
        assert!(transmittance(&layout, &baseline(), 3).is_err());
    }

    #[test]
    fn layout_validation() {
        assert_eq!(NetworkLayout::equal_spacing(0, 1.0), Err(ParamError::NoPlayers));
        assert!(NetworkLayout::equal_spacing(2, -1.0).is_err());
        assert!(NetworkLayout::with_distances(vec![10.0, 12.0]).is_err());
        let l = NetworkLayout::with_distances(vec![30.0, 7.0, 1.0]).unwrap();
        assert_eq!(l.length_km(), 30.0);
        let l = NetworkLayout::equal_spacing(4, 40.0).unwrap();
        assert_eq!(l.distances(), &[40.0, 30.0, 20.0, 10.0]);
    }

    #[test]
    fn params_validation() {
        assert!(baseline().validate().is_ok());
        for bad in [
            SystemParams { eta_d: 0.0, ..baseline() },
            SystemParams { eta_d: 1.2, ..baseline() },
            SystemParams { f_rec: 0.0, ..baseline() },
            SystemParams { t_b: 1.5, ..baseline() },
            SystemParams { delta: -1e-3, ..baseline() },
            SystemParams { n0: 0.0, ..baseline() },
            SystemParams { gamma: f64::NAN, ..baseline() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn excess_noise_referral() {
        let layout = NetworkLayout::equal_spacing(2, 50.0).unwrap();
        let p = baseline();
        assert_relative_eq!(
            excess_noise_referred(&layout, &p, 1, 2, None).unwrap(),
            0.031_622_776_601_683_79,
            max_relative = 1e-14
        );
        assert_eq!(excess_noise_referred(&layout, &p, 2, 2, None).unwrap(), 0.01);
        let quiet = SystemParams { epsilon0: 0.0, ..p };
        assert_eq!(excess_noise_referred(&layout, &quiet, 1, 2, None).unwrap(), 0.0);
        let noisy = SystemParams { delta: 1e-3, ..p };
        assert_relative_eq!(
            excess_noise_referred(&layout, &noisy, 1, 1, Some(4.0)).unwrap(),
            0.014,
            max_relative = 1e-14
        );
    }

    #[test]
    fn heterodyne_noise() {
        let p = SystemParams { eta_d: 0.5, nu_el: 0.1, ..baseline() };
        assert_relative_eq!(chi_het(&p), 3.4, max_relative = 1e-15);
        assert_eq!(chi_het(&SystemParams { eta_d: 1.0, nu_el: 0.0, ..p }), 1.0);
        assert_eq!(chi_het(&SystemParams { nu_el: 0.0, ..p }), 3.0);
    }

    #[test]
    fn budget_examples() {
        let single = NetworkLayout::equal_spacing(1, 50.0).unwrap();
        let b = noise_budget(&single, &baseline(), 1, 4.0).unwrap();
        assert_relative_eq!(b.chi_line, 9.01, max_relative = 1e-14);

        let ideal = SystemParams { gamma: 0.0, epsilon0: 0.0, eta_d: 1.0, nu_el: 0.0, ..baseline() };
        let b = noise_budget(&single, &ideal, 1, 4.0).unwrap();
        assert_eq!((b.chi_line, b.chi_tot), (0.0, 1.0));

        let pair = NetworkLayout::equal_spacing(2, 50.0).unwrap();
        let b = noise_budget(&pair, &baseline(), 1, 4.0).unwrap();
        assert_relative_eq!(b.chi_line, 9.041_622_776_601_684, max_relative = 1e-14);
        assert_relative_eq!(b.chi_tot, b.chi_line + 3.4 / 0.1, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn closer_players_lose_less(n in 2usize..40, length in 0.5f64..150.0, gamma in 0.01f64..1.0) {
            let layout = NetworkLayout::equal_spacing(n, length).unwrap();
            let p = SystemParams { gamma, ..SystemParams::default() };
            let t = transmittances(&layout, &p);
            prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(t.iter().all(|&x| x > 0.0 && x <= 1.0));
        }

        #[test]
        fn unit_splitter_is_pure_fiber(n in 1usize..30, length in 0.0f64..200.0, k_frac in 0.0f64..1.0) {
            let layout = NetworkLayout::equal_spacing(n, length).unwrap();
            let p = SystemParams::default();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let l = layout.distance(k).unwrap();
            prop_assert_eq!(transmittance(&layout, &p, k).unwrap(), 10f64.powf(-p.gamma * l / 10.0));
        }

        #[test]
        fn budget_ordering_and_symmetry(
            n in 1usize..50, length in 0.0f64..100.0, eps in 0.0f64..0.1,
            eta in 0.05f64..1.0, nu in 0.0f64..0.5, frac in 0.0f64..1.0,
        ) {
            let layout = NetworkLayout::equal_spacing(n, length).unwrap();
            let p = SystemParams { epsilon0: eps, eta_d: eta, nu_el: nu, ..SystemParams::default() };
            let j = 1 + ((n - 1) as f64 * frac) as usize;
            let b = noise_budget(&layout, &p, j, 3.0).unwrap();
            let floor = 1.0 / b.transmittance - 1.0;
            prop_assert!(b.chi_tot >= b.chi_line);
            prop_assert!(b.chi_line >= floor - 1e-12);
            prop_assert!((b.chi_tot - b.chi_line - b.chi_het / b.transmittance).abs() <= 1e-12 * b.chi_tot);
            // dealer-referred total player noise does not depend on j
            let lhs: f64 = b.epsilon.iter().map(|e| e * b.transmittance).sum();
            let rhs: f64 = eps * transmittances(&layout, &p).iter().sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }
    }
}
