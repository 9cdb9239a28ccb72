//! Virtual model of the photonic simulator: pixel weighting, purity loss,
//! Poissonian coincidence counts, static-noise calibration and the
//! count-based coherence estimator.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::{dephasing_state, ordered_phase_sum, phase_factor};
use crate::error::{ensure_param, Error, Result};
use crate::exec::{reduce_blocks, Execution};
use crate::state::DensityMatrix;

pub const WEIGHT_SUM_TOL: f64 = 1e-10;
pub const MIN_SAMPLES_PER_PIXEL: usize = 32;

/// How a spectral component at position `x` is shared among pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelResponse {
    /// Each component lands entirely in the pixel containing `x`.
    Indicator,
    /// Gaussian spot of the configured FWHM integrated over each pixel.
    #[default]
    GaussianBlur,
}

/// Spectral intensity `|f(x)|²` on the pixel plane.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Spectrum {
    /// Flat across the active pixels.
    #[default]
    Rectangular,
    Tabulated(TabulatedSpectrum),
}

/// Piecewise-linear spectrum from `(position_mm, relative_intensity)` samples.
/// Positions are measured from the centre of the active pixel array.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    positions: Vec<f64>,
    intensities: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Data("tabulated spectrum needs at least two points".into()));
        }
        for (i, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Data(format!("non-finite value in spectrum row {}", i + 1)));
            }
            if y < 0.0 {
                return Err(Error::Data(format!("negative intensity in spectrum row {}", i + 1)));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Data("spectrum positions must be strictly increasing".into()));
        }
        let (positions, intensities) = points.into_iter().unzip();
        Ok(Self { positions, intensities })
    }

    /// Two-column text: whitespace- or comma-separated, `#` comments, and an
    /// optional header line before the first data row.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut seen_header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let parsed = match cols.as_slice() {
                [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some(p) => points.push(p),
                None if points.is_empty() && !seen_header => seen_header = true,
                None => return Err(Error::Data(format!("line {}: expected two numbers, got {line:?}", lineno + 1))),
            }
        }
        Self::new(points)
    }

    pub fn intensity(&self, x: f64) -> f64 {
        let xs = &self.positions;
        if x < xs[0] || x > xs[xs.len() - 1] {
            return 0.0;
        }
        let i = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
        let (x0, x1) = (xs[i - 1], xs[i]);
        let (y0, y1) = (self.intensities[i - 1], self.intensities[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Geometry of the pixel array and the light falling on it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub n_pixels: usize,
    pub pixel_pitch_mm: f64,
    pub component_fwhm_mm: f64,
    /// Wavelength shift per unit length on the pixel plane (nm/mm).
    pub dispersion_nm_per_mm: f64,
    pub pixel_response: PixelResponse,
    pub spectrum: Spectrum,
    pub samples_per_pixel: usize,
}

impl Default for SpectralModel {
    fn default() -> Self {
        Self {
            n_pixels: 100,
            pixel_pitch_mm: 0.1,
            component_fwhm_mm: 0.06,
            dispersion_nm_per_mm: 1.82,
            pixel_response: PixelResponse::GaussianBlur,
            spectrum: Spectrum::Rectangular,
            samples_per_pixel: MIN_SAMPLES_PER_PIXEL,
        }
    }
}

impl SpectralModel {
    pub fn with_pixels(n_pixels: usize) -> Self {
        Self { n_pixels, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.n_pixels >= 1, "need at least one pixel");
        ensure_param!(self.pixel_pitch_mm.is_finite() && self.pixel_pitch_mm > 0.0, "pixel pitch must be positive");
        ensure_param!(
            self.component_fwhm_mm.is_finite() && self.component_fwhm_mm > 0.0,
            "component FWHM must be positive"
        );
        ensure_param!(
            self.dispersion_nm_per_mm.is_finite() && self.dispersion_nm_per_mm > 0.0,
            "dispersion must be positive"
        );
        ensure_param!(
            self.samples_per_pixel >= MIN_SAMPLES_PER_PIXEL,
            "at least {MIN_SAMPLES_PER_PIXEL} quadrature samples per pixel are required"
        );
        Ok(())
    }

    /// Left edge of pixel `r`; the array is centred on zero.
    pub fn pixel_edge(&self, r: usize) -> f64 {
        (r as f64 - 0.5 * self.n_pixels as f64) * self.pixel_pitch_mm
    }

    /// Wavelength offset from the central component at position `x_mm`.
    pub fn wavelength_offset_nm(&self, x_mm: f64) -> f64 {
        self.dispersion_nm_per_mm * x_mm
    }

    fn spectral_weight(&self, x: f64) -> f64 {
        match &self.spectrum {
            Spectrum::Rectangular => 1.0,
            Spectrum::Tabulated(t) => t.intensity(x),
        }
    }
}

/// Overlap matrix `A_rs = ∫ dx |f(x)|² η_r(x) η_s(x)` of the pixel basis.
///
/// The pixel amplitudes are real, so `A` is real symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelOverlapMatrix {
    a: DMatrix<f64>,
}

impl PixelOverlapMatrix {
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        ensure_param!(a.is_square() && a.nrows() >= 1, "overlap matrix must be square and non-empty");
        Ok(Self { a })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn entry(&self, r: usize, s: usize) -> f64 {
        self.a[(r, s)]
    }

    /// Diagonal `A_rr`: the weight each pixel carries in the reduced state.
    pub fn weights(&self) -> Vec<f64> {
        self.a.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.a.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.a.clone()).eigenvalues.min()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.a - self.a.transpose()).amax()
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Midpoint quadrature of the overlap integral with `samples_per_pixel`
/// nodes per pixel across the active aperture.
pub fn build_overlap_matrix(model: &SpectralModel) -> Result<PixelOverlapMatrix> {
    model.validate()?;
    let n = model.n_pixels;
    let m = model.samples_per_pixel;
    let h = model.pixel_pitch_mm / m as f64;
    let sigma = model.component_fwhm_mm / (8.0 * std::f64::consts::LN_2).sqrt();
    let reach = match model.pixel_response {
        PixelResponse::Indicator => 0,
        PixelResponse::GaussianBlur => (10.0 * sigma / model.pixel_pitch_mm).ceil() as usize + 1,
    };

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut total = 0.0;
    let mut eta = vec![0.0; 2 * reach + 1];
    for home in 0..n {
        let lo_r = home.saturating_sub(reach);
        let hi_r = (home + reach).min(n - 1);
        for j in 0..m {
            let x = model.pixel_edge(home) + (j as f64 + 0.5) * h;
            let w = model.spectral_weight(x) * h;
            if w == 0.0 {
                continue;
            }
            let span = &mut eta[..=hi_r - lo_r];
            match model.pixel_response {
                PixelResponse::Indicator => span[0] = 1.0,
                PixelResponse::GaussianBlur => {
                    let mut norm = 0.0;
                    for (o, e) in span.iter_mut().enumerate() {
                        let r = lo_r + o;
                        let lo = model.pixel_edge(r);
                        let hi = lo + model.pixel_pitch_mm;
                        let q = normal_cdf((hi - x) / sigma) - normal_cdf((lo - x) / sigma);
                        *e = q;
                        norm += q;
                    }
                    for e in span.iter_mut() {
                        *e = (*e / norm).sqrt();
                    }
                }
            }
            for (o1, e1) in span.iter().enumerate() {
                for (o2, e2) in span.iter().enumerate() {
                    a[(lo_r + o1, lo_r + o2)] += w * e1 * e2;
                }
            }
            total += w;
        }
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Data("spectrum carries no intensity across the active pixels".into()));
    }
    a /= total;
    PixelOverlapMatrix::from_matrix(a)
}

/// Reduced polarization state `½ Σ_r A_rr [[1, e^{-2iΦ_r}], [c.c., 1]]`,
/// mixed with `I/2` at weight `1 - p`.
///
/// With uniform weights `1/n` this is bit-identical to
/// `dephasing_state(ensemble_coherence(..), p)`.
pub fn apparatus_state(weights: &[f64], phases: &[f64], p: f64) -> Result<DensityMatrix> {
    ensure_param!(!weights.is_empty(), "no pixel weights given");
    ensure_param!(weights.len() == phases.len(), "{} weights but {} phases", weights.len(), phases.len());
    ensure_param!(weights.iter().all(|w| w.is_finite() && *w >= 0.0), "weights must be finite and non-negative");
    let total: f64 = weights.iter().sum();
    ensure_param!((total - 1.0).abs() <= WEIGHT_SUM_TOL, "weights sum to {total}, expected 1");
    dephasing_state(weighted_coherence(weights, phases), p)
}

/// `Σ_r w_r e^{-2iΦ_r}` in the shared block order.
pub fn weighted_coherence(weights: &[f64], phases: &[f64]) -> Complex64 {
    let w0 = weights[0];
    if weights.iter().all(|&w| w == w0) {
        ordered_phase_sum(phases.len(), |r| phases[r]) * w0
    } else {
        reduce_blocks(
            phases.len(),
            Execution::Serial,
            || Complex64::new(0.0, 0.0),
            |acc, r| *acc += phase_factor(phases[r]) * weights[r],
            |acc, b| *acc += b,
        )
    }
}

/// Coincidence-count model `N_cc ~ Poisson(N (1 + p Re C))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Baseline mean count `N` per acquisition.
    pub n_mean: f64,
    /// Purity parameter.
    pub p: f64,
    /// Acquisition time per measurement in seconds (bookkeeping only).
    pub acquisition_time_s: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { n_mean: 186.0, p: 0.88, acquisition_time_s: 10.0 }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.n_mean.is_finite() && self.n_mean > 0.0, "baseline count must be positive");
        ensure_param!((0.0..=1.0).contains(&self.p), "purity parameter {} outside [0, 1]", self.p);
        Ok(())
    }

    /// Mean count `N (1 + p c)`; this is `2N ⟨+|ρ|+⟩`.
    pub fn expected_count(&self, coherence_real: f64) -> Result<f64> {
        self.validate()?;
        ensure_param!(
            coherence_real.is_finite() && coherence_real.abs() <= 1.0 + crate::channel::COHERENCE_TOL,
            "coherence {coherence_real} outside [-1, 1]"
        );
        let mean = self.n_mean * (1.0 + self.p * coherence_real);
        ensure_param!(mean > 0.0, "Poisson mean {mean} is not positive");
        Ok(mean)
    }
}

/// One `|+⟩` projection measurement.
pub fn simulate_coincidence_counts<R: Rng + ?Sized>(
    detector: &DetectorModel,
    coherence_real: f64,
    rng: &mut R,
) -> Result<u64> {
    let mean = detector.expected_count(coherence_real)?;
    poisson_draw(mean, rng)
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    let dist = Poisson::new(mean).map_err(|e| Error::Parameter(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationFlag {
    /// `p̂` fell outside `[0, 1]`; the value is reported unclamped.
    PurityOutOfRange,
    /// `p̂` is within three standard errors of zero.
    PurityNotSignificant,
}

/// Fitted `N̂ ± σ_N`, `p̂ ± σ_p` from the static-noise reference curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub n_hat: f64,
    pub n_err: f64,
    pub p_hat: f64,
    pub p_err: f64,
    /// Euclidean norm of the fit residuals.
    pub residual_norm: f64,
    pub n_points: usize,
    pub flags: Vec<CalibrationFlag>,
}

impl CalibrationResult {
    /// Calibration taken as exactly known (no uncertainty).
    pub fn exact(n_hat: f64, p_hat: f64) -> Self {
        Self { n_hat, n_err: 0.0, p_hat, p_err: 0.0, residual_norm: 0.0, n_points: 0, flags: Vec::new() }
    }

    pub fn is_flagged(&self, flag: CalibrationFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Least-squares fit of `N_cc(t) = a + b cos(2t)`, reported as
/// `N̂ = a`, `p̂ = b/a` with first-order error propagation.
pub fn calibrate_static_rtn(counts: &[(f64, f64)]) -> Result<CalibrationResult> {
    if counts.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", counts.len())));
    }
    if counts.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite calibration data".into()));
    }
    let (t_min, t_max) =
        counts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)));
    if t_max - t_min < std::f64::consts::FRAC_PI_2 {
        return Err(Error::Fit(format!("times span {:.4}, less than the half-period π/2 of cos(2t)", t_max - t_min)));
    }
    let m = counts.len() as f64;
    let (mut s1, mut s2, mut sy, mut scy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, y) in counts {
        let c = (2.0 * t).cos();
        s1 += c;
        s2 += c * c;
        sy += y;
        scy += c * y;
    }
    let det = m * s2 - s1 * s1;
    if det <= 1e-12 * m * s2.max(f64::MIN_POSITIVE) {
        return Err(Error::Fit("design matrix is singular: cos(2t) is constant over the samples".into()));
    }
    let a = (s2 * sy - s1 * scy) / det;
    let b = (m * scy - s1 * sy) / det;
    if a <= 0.0 {
        return Err(Error::Fit(format!("fitted baseline {a} is not positive")));
    }
    // Poisson noise is heteroscedastic, so the parameter covariance uses the
    // sandwich form (XᵀX)⁻¹ Xᵀ diag(r²) X (XᵀX)⁻¹ with the m/(m-2) correction.
    let (mut rss, mut q1, mut q2) = (0.0, 0.0, 0.0);
    for &(t, y) in counts {
        let c = (2.0 * t).cos();
        let r2 = (y - a - b * c).powi(2);
        rss += r2;
        q1 += r2 * c;
        q2 += r2 * c * c;
    }
    let bread = Matrix2::new(s2, -s1, -s1, m) / det;
    let meat = Matrix2::new(rss, q1, q1, q2) * (m / (m - 2.0));
    let cov = bread * meat * bread;
    let (var_a, var_b, cov_ab) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let p_hat = b / a;
    let var_p = var_b / (a * a) + b * b * var_a / a.powi(4) - 2.0 * b * cov_ab / a.powi(3);
    let p_err = var_p.max(0.0).sqrt();

    let mut flags = Vec::new();
    if !(0.0..=1.0).contains(&p_hat) {
        flags.push(CalibrationFlag::PurityOutOfRange);
    }
    if p_hat.abs() <= 3.0 * p_err {
        flags.push(CalibrationFlag::PurityNotSignificant);
    }
    Ok(CalibrationResult {
        n_hat: a,
        n_err: var_a.max(0.0).sqrt(),
        p_hat,
        p_err,
        residual_norm: rss.sqrt(),
        n_points: counts.len(),
        flags,
    })
}

/// Which reading of the count estimator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorForm {
    /// `(N_cc/N̂ - 1)/p̂`, consistent with the fit model.
    #[default]
    Normalized,
    /// `(N_cc - N̂)/p̂`, only meaningful for counts already divided by `N̂`.
    Literal,
}

/// `Re ⟨e^{-2iΦ}⟩ ≈ (N_cc/N̂ - 1)/p̂`.
pub fn coherence_from_counts(count: f64, calibration: &CalibrationResult) -> Result<f64> {
    coherence_from_counts_with(count, calibration, EstimatorForm::Normalized)
}

pub fn coherence_from_counts_with(count: f64, calibration: &CalibrationResult, form: EstimatorForm) -> Result<f64> {
    if calibration.p_hat == 0.0 || !calibration.p_hat.is_finite() {
        return Err(Error::Estimation("calibrated purity is zero".into()));
    }
    if !(calibration.n_hat > 0.0) {
        return Err(Error::Estimation(format!("calibrated baseline {} is not positive", calibration.n_hat)));
    }
    Ok(match form {
        EstimatorForm::Normalized => (count / calibration.n_hat - 1.0) / calibration.p_hat,
        EstimatorForm::Literal => (count - calibration.n_hat) / calibration.p_hat,
    })
}

/// Poisson standard error of the normalized estimator, `√N_cc / (N̂ p̂)`.
pub fn count_coherence_stderr(count: f64, calibration: &CalibrationResult) -> f64 {
    count.max(0.0).sqrt() / (calibration.n_hat * calibration.p_hat).abs()
}
