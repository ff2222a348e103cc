//! Numeric Gaussian-state oracle.
//!
//! Builds the entanglement-based covariance matrices behind the key-rate
//! formulas and extracts symplectic spectra with a Hermitian eigensolver,
//! independently of the closed forms in [`crate::keyrate`].
//!
//! Quadrature ordering is `(x₁, p₁, x₂, p₂, …)` and the vacuum has unit
//! variance.

use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix, SymmetricEigen};
use thiserror::Error;

/// Physicality slack on `γ + iΩ ≥ 0`.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;
/// Relative tolerance when pairing `+ν` with `−ν`.
pub const PAIRING_TOLERANCE: f64 = 1e-6;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("covariance matrix must be square with even dimension, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("covariance matrix is not symmetric (entry ({row}, {col}))")]
    NotSymmetric { row: usize, col: usize },
    #[error("covariance matrix violates the uncertainty principle (min eigenvalue of γ + iΩ = {0})")]
    Unphysical(f64),
    #[error("eigensolver did not return paired ±ν spectrum")]
    EigenSolver,
    #[error("invalid oracle input: {what} = {value}")]
    Input { what: &'static str, value: f64 },
    #[error("singular matrix in heterodyne conditioning")]
    Singular,
}

/// Real symmetric covariance matrix of an `N`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

/// Standard symplectic form `⊕ [[0, 1], [−1, 0]]`.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for m in 0..modes {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    omega
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

impl CovarianceMatrix {
    /// Validates shape, symmetry and the uncertainty principle.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, OracleError> {
        let cov = Self::unchecked(entries)?;
        let min = cov.physicality_margin();
        let scale = cov.entries.amax().max(1.0);
        if min < -PHYSICALITY_TOLERANCE * scale {
            return Err(OracleError::Unphysical(min));
        }
        Ok(cov)
    }

    fn unchecked(entries: DMatrix<f64>) -> Result<Self, OracleError> {
        let (rows, cols) = entries.shape();
        if rows != cols || rows % 2 != 0 || rows == 0 {
            return Err(OracleError::Shape { rows, cols });
        }
        let scale = entries.amax().max(1.0);
        for i in 0..rows {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(OracleError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn modes(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Smallest eigenvalue of the Hermitian matrix `γ + iΩ`.
    pub fn physicality_margin(&self) -> f64 {
        let omega = symplectic_form(self.modes());
        let h = complexify(&self.entries) + omega.map(|x| Complex::new(0.0, x));
        SymmetricEigen::new(h).eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    /// `S γ Sᵀ`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self, OracleError> {
        let out = s * &self.entries * s.transpose();
        Self::unchecked((&out + out.transpose()) * 0.5)
    }

    /// Sub-matrix on the listed modes, in the given order.
    pub fn select_modes(&self, modes: &[usize]) -> Self {
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let n = idx.len();
        let entries = DMatrix::from_fn(n, n, |i, j| self.entries[(idx[i], idx[j])]);
        Self { entries }
    }
}

/// Symplectic eigenvalues, sorted descending.
///
/// `iΩγ` is similar to the Hermitian matrix `i γ^{1/2} Ω γ^{1/2}`, whose
/// spectrum is `{±ν_k}`.
pub fn symplectic_eigs(cov: &CovarianceMatrix) -> Result<Vec<f64>, OracleError> {
    let modes = cov.modes();
    let eig = SymmetricEigen::new(cov.entries.clone());
    if eig.eigenvalues.iter().any(|&x| !(x > 0.0)) {
        return Err(OracleError::Unphysical(eig.eigenvalues.min()));
    }
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.sqrt()))
        * eig.eigenvectors.transpose();
    let k = &root * symplectic_form(modes) * &root;
    let h = k.map(|x| Complex::new(0.0, x));
    let mut spectrum: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let (pos, neg) = spectrum.split_at(modes);
    for (p, n) in pos.iter().zip(neg.iter().rev()) {
        if !(*p > 0.0) || (p + n).abs() > PAIRING_TOLERANCE * p.abs() {
            return Err(OracleError::EigenSolver);
        }
    }
    Ok(pos.to_vec())
}

/// Two-mode state after the channel, in the entanglement-based picture:
/// `[[V·I, √(T(V²−1))·Z], [√(T(V²−1))·Z, T(V+χ_line)·I]]`.
pub fn build_eb_state(v: f64, t: f64, chi_line: f64) -> Result<CovarianceMatrix, OracleError> {
    if !(v >= 1.0) {
        return Err(OracleError::Input { what: "V", value: v });
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(OracleError::Input { what: "T", value: t });
    }
    if !(chi_line >= 0.0) {
        return Err(OracleError::Input { what: "chi_line", value: chi_line });
    }
    let c = (t * (v * v - 1.0)).sqrt();
    let b = t * (v + chi_line);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        v,   0.0, c,   0.0,
        0.0, v,   0.0, -c,
        c,   0.0, b,   0.0,
        0.0, -c,  0.0, b,
    ]);
    CovarianceMatrix::new(m)
}

/// Trusted detector: efficiency and electronic noise (SNU).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    pub eta_d: f64,
    pub nu_el: f64,
}

fn two_mode_squeezed(v: f64) -> DMatrix<f64> {
    let c = (v * v - 1.0).max(0.0).sqrt();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        v,   0.0, c,   0.0,
        0.0, v,   0.0, -c,
        c,   0.0, v,   0.0,
        0.0, -c,  0.0, v,
    ]);
    m
}

/// Beam splitter with transmittance `eta` on modes `a`, `b` of `modes`.
fn beam_splitter(modes: usize, a: usize, b: usize, eta: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * modes, 2 * modes);
    let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
    for q in 0..2 {
        s[(2 * a + q, 2 * a + q)] = t;
        s[(2 * a + q, 2 * b + q)] = r;
        s[(2 * b + q, 2 * a + q)] = -r;
        s[(2 * b + q, 2 * b + q)] = t;
    }
    s
}

/// Heterodyne conditioning of `kept` on the measured mode `measured`:
/// `γ_A|B = γ_A − σ (γ_B + I)⁻¹ σᵀ`.
fn condition_on_heterodyne(
    cov: &DMatrix<f64>,
    kept: &[usize],
    measured: usize,
) -> Result<DMatrix<f64>, OracleError> {
    let idx: Vec<usize> = kept.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
    let n = idx.len();
    let gamma_a = DMatrix::from_fn(n, n, |i, j| cov[(idx[i], idx[j])]);
    let sigma = DMatrix::from_fn(n, 2, |i, j| cov[(idx[i], 2 * measured + j)]);
    let gamma_b = DMatrix::from_fn(2, 2, |i, j| cov[(2 * measured + i, 2 * measured + j)]);
    let inv = (gamma_b + DMatrix::identity(2, 2)).try_inverse().ok_or(OracleError::Singular)?;
    let out = gamma_a - &sigma * inv * sigma.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// State of Eve's purifying complement (modes `A`, `F`, `G`) conditioned on
/// the dealer's heterodyne outcome.
///
/// The detector is a beam splitter of transmittance `η_D` mixing the
/// received mode with one arm of an EPR pair of variance
/// `1 + 2ν_el / (1 − η_D)`, followed by ideal heterodyne detection. Its
/// symplectic spectrum is `{λ₃, λ₄, 1}`.
///
/// For `η_D = 1` the EPR variance diverges; electronic noise is then added
/// directly to the received mode and the returned 6×6 matrix is
/// `γ_A|B ⊕ I₄`.
pub fn conditional_state_after_heterodyne(
    cov_ab: &CovarianceMatrix,
    detector: Detector,
) -> Result<CovarianceMatrix, OracleError> {
    if cov_ab.modes() != 2 {
        return Err(OracleError::Shape { rows: cov_ab.entries.nrows(), cols: cov_ab.entries.ncols() });
    }
    let Detector { eta_d, nu_el } = detector;
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        return Err(OracleError::Input { what: "eta_D", value: eta_d });
    }
    if !(nu_el >= 0.0) {
        return Err(OracleError::Input { what: "nu_el", value: nu_el });
    }
    if eta_d == 1.0 {
        let mut m = cov_ab.entries.clone();
        for q in 2..4 {
            m[(q, q)] += 2.0 * nu_el;
        }
        let cond = condition_on_heterodyne(&m, &[0], 1)?;
        let mut full = DMatrix::identity(6, 6);
        full.view_mut((0, 0), (2, 2)).copy_from(&cond);
        return CovarianceMatrix::new(full);
    }
    // modes: 0 = A, 1 = B, 2 = F (detector input), 3 = G (purification)
    let v = 1.0 + 2.0 * nu_el / (1.0 - eta_d);
    let mut full = DMatrix::zeros(8, 8);
    full.view_mut((0, 0), (4, 4)).copy_from(&cov_ab.entries);
    full.view_mut((4, 4), (4, 4)).copy_from(&two_mode_squeezed(v));
    let s = beam_splitter(4, 1, 2, eta_d);
    let mixed = &s * full * s.transpose();
    let cond = condition_on_heterodyne(&mixed, &[0, 2, 3], 1)?;
    CovarianceMatrix::new(cond)
}

/// `(λ₃, λ₄)` from the conditional state: the spectrum with the
/// purification mode (the eigenvalue closest to 1) removed.
pub fn conditional_eigs(cov_ab: &CovarianceMatrix, detector: Detector) -> Result<(f64, f64), OracleError> {
    let cond = conditional_state_after_heterodyne(cov_ab, detector)?;
    let mut eigs = symplectic_eigs(&cond)?;
    let (drop, _) = eigs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(i, d), (k, &x)| if (x - 1.0).abs() < d { (k, (x - 1.0).abs()) } else { (i, d) });
    eigs.remove(drop);
    Ok((eigs[0], eigs[1]))
}
