//! Distinguishability dynamics and the revival-based non-Markovianity measure.

use serde::{Deserialize, Serialize};

use crate::channel::CoherenceSeries;
use crate::error::{ensure_param, Result};
use crate::state::{hermitian_eigenvalues, DensityMatrix};

/// Tolerance floor for noiseless (analytic) series.
pub const MIN_TOLERANCE: f64 = 1e-6;

/// Multiple of the estimated standard error used as the default revival threshold.
pub const NOISE_TOLERANCE_FACTOR: f64 = 3.0;

/// `½ ‖ρ₁ - ρ₂‖₁`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> f64 {
    let diff = rho1.matrix() - rho2.matrix();
    let (lo, hi) = hermitian_eigenvalues(&diff);
    (0.5 * (lo.abs() + hi.abs())).min(1.0)
}

/// `D(t) = |C(t)|` pointwise.
pub fn coherence_trace_distance(series: &CoherenceSeries) -> Vec<(f64, f64)> {
    series.times().iter().zip(series.values()).map(|(&t, c)| (t, c.norm())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Markovian,
    NonMarkovian,
}

/// A stretch over which `D(t)` grew by more than the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Revival {
    pub t_start: f64,
    pub t_end: f64,
    /// `D(t_end) - D(t_start)`.
    pub rise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovianityReport {
    /// Raw positive variation `Σ max(0, D_{k+1} - D_k)`.
    pub blp_value: f64,
    /// Sum of the rises of the revivals that cleared the tolerance.
    pub significant_blp: f64,
    pub revival_intervals: Vec<Revival>,
    pub classification: Classification,
    pub tolerance: f64,
}

/// Discrete BLP functional and revival detection.
///
/// A revival opens once `D` climbs more than `tolerance` above the lowest
/// value seen since the previous revival, and closes once `D` falls more
/// than `tolerance` below its running peak. With `tolerance = 0` the
/// revivals are exactly the maximal runs of increasing `D`. Classification
/// is `NonMarkovian` iff at least one revival cleared the tolerance.
pub fn blp_measure(d_series: &[(f64, f64)], tolerance: f64) -> Result<MarkovianityReport> {
    ensure_param!(d_series.len() >= 2, "need at least two points, got {}", d_series.len());
    ensure_param!(tolerance.is_finite() && tolerance >= 0.0, "tolerance must be non-negative");
    ensure_param!(d_series.iter().all(|(t, d)| t.is_finite() && d.is_finite()), "series contains non-finite values");
    if let Some(k) = d_series.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(crate::Error::Parameter(format!(
            "times must be strictly increasing (row {} at t = {})",
            k + 2,
            d_series[k + 1].0
        )));
    }

    let blp_value = d_series.windows(2).map(|w| (w[1].1 - w[0].1).max(0.0)).sum();

    let mut revivals = Vec::new();
    let mut trough = 0usize;
    let mut peak: Option<usize> = None;
    for k in 1..d_series.len() {
        let d = d_series[k].1;
        match peak {
            None => {
                if d < d_series[trough].1 {
                    trough = k;
                } else if d - d_series[trough].1 > tolerance {
                    peak = Some(k);
                }
            }
            Some(pk) => {
                if d >= d_series[pk].1 {
                    peak = Some(k);
                } else if d_series[pk].1 - d > tolerance {
                    revivals.push(revival(d_series, trough, pk));
                    peak = None;
                    trough = k;
                }
            }
        }
    }
    if let Some(pk) = peak {
        revivals.push(revival(d_series, trough, pk));
    }

    let significant_blp: f64 = revivals.iter().map(|r| r.rise).sum();
    let classification = if revivals.is_empty() { Classification::Markovian } else { Classification::NonMarkovian };
    Ok(MarkovianityReport { blp_value, significant_blp, revival_intervals: revivals, classification, tolerance })
}

fn revival(d: &[(f64, f64)], from: usize, to: usize) -> Revival {
    Revival { t_start: d[from].0, t_end: d[to].0, rise: d[to].1 - d[from].1 }
}

/// Default threshold for a noisy series: three times its largest standard error,
/// never below [`MIN_TOLERANCE`].
pub fn noise_tolerance(stderr: &[f64]) -> f64 {
    let max = stderr.iter().copied().filter(|s| s.is_finite()).fold(0.0, f64::max);
    (NOISE_TOLERANCE_FACTOR * max).max(MIN_TOLERANCE)
}
