//! Four-projector polarization tomography with linear inversion.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::apparatus::poisson_draw;
use crate::error::{ensure_param, Error, Result};
use crate::state::{bloch_matrix, bloch_of, check_hermitian_unit_trace, hermitian_eigenvalues, norm3, DensityMatrix};

/// The measured projectors, in count order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projector {
    H,
    V,
    /// `(|H⟩ + |V⟩)/√2`
    Plus,
    /// `(|H⟩ + i|V⟩)/√2`
    L,
}

impl Projector {
    pub const ALL: [Projector; 4] = [Projector::H, Projector::V, Projector::Plus, Projector::L];

    pub fn ket(self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Projector::H => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            Projector::V => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            Projector::Plus => [Complex64::new(s, 0.0), Complex64::new(s, 0.0)],
            Projector::L => [Complex64::new(s, 0.0), Complex64::new(0.0, s)],
        }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn matrix(self) -> Matrix2<Complex64> {
        let k = self.ket();
        Matrix2::from_fn(|i, j| k[i] * k[j].conj())
    }

    pub fn label(self) -> &'static str {
        match self {
            Projector::H => "H",
            Projector::V => "V",
            Projector::Plus => "+",
            Projector::L => "L",
        }
    }
}

/// Counts per projector, ordered as [`Projector::ALL`].
///
/// Values are `f64` so that exact Born-rule expectations can be fed
/// through the same reconstruction as Poisson draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyCounts {
    pub counts: [f64; 4],
    /// Mean total count that a projector with unit probability would collect.
    pub baseline: f64,
}

impl TomographyCounts {
    pub fn new(counts: [f64; 4], baseline: f64) -> Result<Self> {
        ensure_param!(counts.iter().all(|c| c.is_finite() && *c >= 0.0), "counts must be non-negative");
        Ok(Self { counts, baseline })
    }

    pub fn get(&self, p: Projector) -> f64 {
        self.counts[p as usize]
    }
}

fn check_baseline(baseline: f64) -> Result<()> {
    ensure_param!(baseline.is_finite() && baseline > 0.0, "baseline must be positive, got {baseline}");
    Ok(())
}

/// Exact Born-rule expectations `baseline · Tr(Π_k ρ)`.
pub fn expected_tomography_counts(state: &DensityMatrix, baseline: f64) -> Result<TomographyCounts> {
    check_baseline(baseline)?;
    let counts = Projector::ALL.map(|p| (baseline * state.probability(p.ket())).max(0.0));
    TomographyCounts::new(counts, baseline)
}

/// One independent Poisson acquisition per projector.
pub fn simulate_tomography_counts<R: Rng + ?Sized>(
    state: &DensityMatrix,
    baseline: f64,
    rng: &mut R,
) -> Result<TomographyCounts> {
    let means = expected_tomography_counts(state, baseline)?;
    let mut counts = [0.0; 4];
    for (c, &mean) in counts.iter_mut().zip(&means.counts) {
        *c = if mean > 0.0 { poisson_draw(mean, rng)? as f64 } else { 0.0 };
    }
    TomographyCounts::new(counts, baseline)
}

/// Stokes parameters `(s_x, s_y, s_z)` normalized by `n_H + n_V`.
pub fn stokes(counts: &TomographyCounts) -> Result<[f64; 3]> {
    let total = counts.get(Projector::H) + counts.get(Projector::V);
    if !(total > 0.0) {
        return Err(Error::Estimation("no counts in the H/V measurements".into()));
    }
    Ok([
        2.0 * counts.get(Projector::Plus) / total - 1.0,
        2.0 * counts.get(Projector::L) / total - 1.0,
        (counts.get(Projector::H) - counts.get(Projector::V)) / total,
    ])
}

/// `ρ = ½(I + s·σ)` from the Stokes estimates, repaired to a physical state.
pub fn reconstruct_linear_inversion(counts: &TomographyCounts) -> Result<DensityMatrix> {
    project_to_physical(&bloch_matrix(stokes(counts)?))
}

/// Clips negative eigenvalues and renormalizes.
///
/// For a qubit the eigenvectors of `½(I + r·σ)` are `±r̂` with eigenvalues
/// `½(1 ± |r|)`; clipping the negative one leaves the pure state along `r̂`.
pub fn project_to_physical(raw: &Matrix2<Complex64>) -> Result<DensityMatrix> {
    check_hermitian_unit_trace(raw)?;
    let (lo, _) = hermitian_eigenvalues(raw);
    if lo >= 0.0 {
        return DensityMatrix::new(*raw);
    }
    let r = bloch_of(raw);
    let len = norm3(r);
    DensityMatrix::from_bloch([r[0] / len, r[1] / len, r[2] / len])
}

/// Coherence estimate `2⟨H|ρ|V⟩ / p̂` from a reconstructed state.
pub fn tomographic_coherence(state: &DensityMatrix, p_hat: f64) -> Result<Complex64> {
    if p_hat == 0.0 || !p_hat.is_finite() {
        return Err(Error::Estimation("calibrated purity is zero".into()));
    }
    Ok(state.coherence() * (2.0 / p_hat))
}

/// First-order Poisson standard error of `Re` of [`tomographic_coherence`],
/// from `s_x = 2 n_+ / (n_H + n_V) - 1`.
pub fn tomographic_coherence_stderr(counts: &TomographyCounts, p_hat: f64) -> Result<f64> {
    let total = counts.get(Projector::H) + counts.get(Projector::V);
    if !(total > 0.0) {
        return Err(Error::Estimation("no counts in the H/V measurements".into()));
    }
    let plus = counts.get(Projector::Plus);
    let var_sx = 4.0 * plus / (total * total) + 4.0 * plus * plus / (total * total * total);
    Ok(var_sx.sqrt() / p_hat.abs())
}
