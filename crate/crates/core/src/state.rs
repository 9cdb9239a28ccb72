//! Qubit density matrices in the `{H, V}` polarization basis.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{ensure_param, Error, Result};

pub const TRACE_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A validated 2×2 density matrix. Index 0 is `|H⟩`, index 1 is `|V⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: Matrix2<Complex64>,
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(m: Matrix2<Complex64>) -> Result<Self> {
        check_hermitian_unit_trace(&m)?;
        let (lo, _) = hermitian_eigenvalues(&m);
        ensure_param!(lo >= -PSD_TOL, "state has negative eigenvalue {lo}");
        Ok(Self { m })
    }

    /// `½(I + r·σ)`; requires `|r| ≤ 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let len = norm3(r);
        ensure_param!(r.iter().all(|x| x.is_finite()), "Bloch vector must be finite");
        ensure_param!(len <= 1.0 + PSD_TOL, "Bloch vector of length {len} is outside the ball");
        Ok(Self { m: bloch_matrix(r) })
    }

    pub fn maximally_mixed() -> Self {
        Self { m: bloch_matrix([0.0; 3]) }
    }

    /// `|+⟩⟨+|` with `|+⟩ = (|H⟩ + |V⟩)/√2`.
    pub fn plus() -> Self {
        Self { m: bloch_matrix([1.0, 0.0, 0.0]) }
    }

    pub fn horizontal() -> Self {
        Self { m: bloch_matrix([0.0, 0.0, 1.0]) }
    }

    pub fn vertical() -> Self {
        Self { m: bloch_matrix([0.0, 0.0, -1.0]) }
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.m
    }

    /// Off-diagonal element `⟨H|ρ|V⟩`.
    pub fn coherence(&self) -> Complex64 {
        self.m[(0, 1)]
    }

    pub fn bloch(&self) -> [f64; 3] {
        bloch_of(&self.m)
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> (f64, f64) {
        hermitian_eigenvalues(&self.m)
    }

    pub fn purity(&self) -> f64 {
        let r = norm3(self.bloch());
        0.5 * (1.0 + r * r)
    }

    /// `Tr(Π ρ)` for a projector given as a unit vector `|ψ⟩`: `⟨ψ|ρ|ψ⟩`.
    pub fn probability(&self, psi: [Complex64; 2]) -> f64 {
        let mut acc = ZERO;
        for i in 0..2 {
            for j in 0..2 {
                acc += psi[i].conj() * self.m[(i, j)] * psi[j];
            }
        }
        acc.re
    }
}

pub(crate) fn bloch_matrix(r: [f64; 3]) -> Matrix2<Complex64> {
    let [x, y, z] = r;
    Matrix2::new(
        Complex64::new(0.5 * (1.0 + z), 0.0),
        Complex64::new(0.5 * x, -0.5 * y),
        Complex64::new(0.5 * x, 0.5 * y),
        Complex64::new(0.5 * (1.0 - z), 0.0),
    )
}

pub(crate) fn bloch_of(m: &Matrix2<Complex64>) -> [f64; 3] {
    let c = m[(0, 1)];
    [2.0 * c.re, -2.0 * c.im, m[(0, 0)].re - m[(1, 1)].re]
}

pub(crate) fn norm3(r: [f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// Ascending eigenvalues of a Hermitian 2×2 matrix (only the Hermitian part is read).
pub fn hermitian_eigenvalues(m: &Matrix2<Complex64>) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mid = 0.5 * (a + d);
    let rad = (0.5 * (a - d)).hypot(b.norm());
    (mid - rad, mid + rad)
}

pub(crate) fn check_hermitian_unit_trace(m: &Matrix2<Complex64>) -> Result<()> {
    ensure_param!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()), "matrix has non-finite entries");
    let skew = (m[(0, 1)] - m[(1, 0)].conj()).norm().max(m[(0, 0)].im.abs()).max(m[(1, 1)].im.abs());
    if skew > HERMITIAN_TOL {
        return Err(Error::Parameter(format!("matrix is not Hermitian (deviation {skew:e})")));
    }
    let tr = m[(0, 0)].re + m[(1, 1)].re;
    ensure_param!((tr - 1.0).abs() <= TRACE_TOL, "trace is {tr}, expected 1");
    Ok(())
}
