//! Ensemble-averaged dephasing dynamics and closed-form references.
//!
//! In the interaction picture the qubit state is
//! `ρ(t) = ½ [[1, ⟨e^{-2iΦ}⟩], [⟨e^{2iΦ}⟩, 1]]`, so everything reduces to the
//! complex coherence `⟨e^{-2iΦ(t)}⟩` averaged over noise realizations.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Result};
use crate::exec::{map_indexed, reduce_blocks, Execution};
use crate::state::DensityMatrix;
use crate::stochastic::{
    accumulate_phase, sample_path, PathSampler, PhaseAccumulator, PhasePath, ProcessSpec, SeedSpec, TimeGrid,
};

/// Slack on `|C| ≤ 1` for accumulated rounding.
pub const COHERENCE_TOL: f64 = 1e-12;

/// `e^{-2iΦ}`.
#[inline]
pub fn phase_factor(phi: f64) -> Complex64 {
    let (s, c) = (2.0 * phi).sin_cos();
    Complex64::new(c, -s)
}

/// Qubit Hamiltonian `ε σ_z + X(t) σ_z` with unit coupling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub epsilon: f64,
}

impl HamiltonianParams {
    /// Undo the interaction picture: `⟨H|ρ_lab|V⟩ = e^{-2iεt} ⟨H|ρ_int|V⟩`.
    pub fn lab_frame_coherence(&self, interaction: Complex64, t: f64) -> Complex64 {
        phase_factor(self.epsilon * t) * interaction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
    CountEstimated,
    Tomographic,
}

/// Time-indexed complex coherence `⟨e^{-2iΦ(t)}⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSeries {
    times: Vec<f64>,
    values: Vec<Complex64>,
    provenance: Provenance,
}

impl CoherenceSeries {
    pub fn new(times: Vec<f64>, values: Vec<Complex64>, provenance: Provenance) -> Result<Self> {
        ensure_param!(times.len() == values.len(), "{} times but {} values", times.len(), values.len());
        if matches!(provenance, Provenance::Analytic | Provenance::MonteCarlo) {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.norm() > 1.0 + COHERENCE_TOL) {
                return Err(crate::Error::Parameter(format!("|C| = {} > 1 at index {i}", v.norm())));
            }
        }
        Ok(Self { times, values, provenance })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `C(t) = |⟨e^{-2iΦ}⟩|`.
    pub fn modulus(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

/// `(1/n) Σ_r e^{-2iΦ_r(t_k)}` summed in fixed block order over path index.
pub fn ensemble_coherence(phases: &[PhasePath], t_index: usize) -> Result<Complex64> {
    ensure_param!(!phases.is_empty(), "ensemble is empty");
    ensure_param!(phases.iter().all(|p| t_index < p.len()), "time index {t_index} is outside at least one phase path");
    let sum = ordered_phase_sum(phases.len(), |r| phases[r].at(t_index));
    Ok(sum * (1.0 / phases.len() as f64))
}

/// `Σ_r e^{-2iΦ_r}` using the block order shared by every ensemble reduction.
pub(crate) fn ordered_phase_sum(n: usize, phase: impl Fn(usize) -> f64 + Sync + Send) -> Complex64 {
    reduce_blocks(
        n,
        Execution::Serial,
        || Complex64::new(0.0, 0.0),
        |acc, r| *acc += phase_factor(phase(r)),
        |acc, b| *acc += b,
    )
}

/// `½ [[1, (p/2)…]]`: mixes the dephased state with `I/2` at weight `1 - p`.
///
/// The result has `⟨H|ρ|V⟩ = (p/2) · coherence`.
pub fn dephasing_state(coherence: Complex64, p: f64) -> Result<DensityMatrix> {
    ensure_param!(
        coherence.re.is_finite() && coherence.im.is_finite() && coherence.norm() <= 1.0 + COHERENCE_TOL,
        "|coherence| = {} exceeds 1",
        coherence.norm()
    );
    ensure_param!((0.0..=1.0).contains(&p), "purity parameter {p} outside [0, 1]");
    let off = coherence * (0.5 * p);
    let half = Complex64::new(0.5, 0.0);
    DensityMatrix::new(Matrix2::new(half, off, off.conj(), half))
}

/// Closed-form RTN coherence for unit amplitude, switching rate `gamma`
/// and equiprobable stationary start.
pub fn analytic_rtn_coherence(gamma: f64, t: f64) -> Result<f64> {
    ensure_param!(gamma.is_finite() && gamma >= 0.0, "rate must be non-negative, got {gamma}");
    ensure_param!(t.is_finite() && t >= 0.0, "time must be non-negative, got {t}");
    let c = if gamma < 2.0 {
        let mu = (4.0 - gamma * gamma).sqrt();
        (-gamma * t).exp() * ((mu * t).cos() + gamma / mu * (mu * t).sin())
    } else if gamma > 2.0 {
        // e^{-γt}[cosh νt + (γ/ν) sinh νt] = e^{-(γ-ν)t}[(1 + e^{-2νt})/2 + γ(1 - e^{-2νt})/(2ν)]
        let nu = (gamma * gamma - 4.0).sqrt();
        let slow = 4.0 / (gamma + nu);
        let decay = (-2.0 * nu * t).exp();
        (-slow * t).exp() * (0.5 * (1.0 + decay) + gamma * (-(-2.0 * nu * t).exp_m1()) / (2.0 * nu))
    } else {
        (-2.0 * t).exp() * (1.0 + 2.0 * t)
    };
    // C(t) = 1 - 2t² + O(t³): rounding can push the first points just past 1
    Ok(c.clamp(-1.0, 1.0))
}

/// `Var[Φ(t)]` for the OU process `dX = -2γX dt + 2√γ dW`, `X(0) = 0`.
///
/// With covariance `K(u,v) = e^{-2γ|u-v|} - e^{-2γ(u+v)}` the double
/// integral gives `(2a - 3 + 4e^{-a} - e^{-2a}) / (4γ²)` with `a = 2γt`.
pub fn ou_phase_variance(gamma: f64, t: f64) -> Result<f64> {
    ensure_param!(gamma.is_finite() && gamma > 0.0, "OU rate must be positive, got {gamma}");
    ensure_param!(t.is_finite() && t >= 0.0, "time must be non-negative, got {t}");
    let a = 2.0 * gamma * t;
    let numer = if a < 1.0 {
        // Σ_{k≥3} (-1)^k (4 - 2^k) a^k / k!
        let mut term_pow = a * a * a / 6.0;
        let mut two_k = 8.0;
        let mut sign = -1.0;
        let mut sum = 0.0;
        for k in 3..40 {
            let term = sign * (4.0 - two_k) * term_pow;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            term_pow *= a / (k + 1) as f64;
            two_k *= 2.0;
            sign = -sign;
        }
        sum
    } else {
        2.0 * a - 3.0 + 4.0 * (-a).exp() - (-2.0 * a).exp()
    };
    Ok(numer / (4.0 * gamma * gamma))
}

/// Closed-form OU coherence `exp(-2 Var[Φ(t)])` (exact for a Gaussian phase).
pub fn analytic_ou_coherence(gamma: f64, t: f64) -> Result<f64> {
    Ok((-2.0 * ou_phase_variance(gamma, t)?).exp())
}

/// Analytic coherence for whichever process `spec` names.
pub fn analytic_coherence(spec: &ProcessSpec, t: f64) -> Result<f64> {
    match spec.kind {
        crate::NoiseKind::Rtn => analytic_rtn_coherence(spec.gamma, t),
        crate::NoiseKind::Ou if spec.gamma == 0.0 => Ok(1.0),
        crate::NoiseKind::Ou => analytic_ou_coherence(spec.gamma, t),
    }
}

/// Sampling points on a grid: every `stride`-th index, including 0.
pub fn report_indices(grid: &TimeGrid, stride: usize) -> Result<Vec<usize>> {
    ensure_param!(stride >= 1, "report stride must be at least 1");
    Ok((0..=grid.n_steps()).step_by(stride).collect())
}

/// Monte Carlo coherence estimate with per-point standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub mean: Vec<Complex64>,
    /// `sqrt((s²_re + s²_im)/n)` from the sample variances of `e^{-2iΦ_r}`.
    pub stderr: Vec<f64>,
}

impl EnsembleEstimate {
    pub fn series(&self) -> CoherenceSeries {
        CoherenceSeries { times: self.times.clone(), values: self.mean.clone(), provenance: Provenance::MonteCarlo }
    }
}

#[derive(Clone)]
struct Moments {
    sum: Vec<Complex64>,
    sq_re: Vec<f64>,
    sq_im: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self { sum: vec![Complex64::new(0.0, 0.0); n], sq_re: vec![0.0; n], sq_im: vec![0.0; n] }
    }

    #[inline]
    fn add(&mut self, j: usize, z: Complex64) {
        self.sum[j] += z;
        self.sq_re[j] += z.re * z.re;
        self.sq_im[j] += z.im * z.im;
    }

    fn merge(&mut self, other: Moments) {
        for j in 0..self.sum.len() {
            self.sum[j] += other.sum[j];
            self.sq_re[j] += other.sq_re[j];
            self.sq_im[j] += other.sq_im[j];
        }
    }

    fn finish(self, indices: Vec<usize>, grid: &TimeGrid, n: usize) -> EnsembleEstimate {
        let inv = 1.0 / n as f64;
        let mean: Vec<Complex64> = self.sum.iter().map(|s| s * inv).collect();
        let stderr = mean
            .iter()
            .enumerate()
            .map(|(j, m)| {
                if n < 2 {
                    return 0.0;
                }
                let nf = n as f64;
                let var_re = ((self.sq_re[j] - nf * m.re * m.re) / (nf - 1.0)).max(0.0);
                let var_im = ((self.sq_im[j] - nf * m.im * m.im) / (nf - 1.0)).max(0.0);
                ((var_re + var_im) / nf).sqrt()
            })
            .collect();
        let times = indices.iter().map(|&k| grid.time(k)).collect();
        EnsembleEstimate { indices, times, n_paths: n, mean, stderr }
    }
}

/// Streams `n_paths` trajectories and averages `e^{-2iΦ_r}` at `indices`.
///
/// Paths are never stored, so memory is independent of `n_paths`. The
/// result is bit-identical to [`ensemble_coherence`] over the corresponding
/// stored phase paths, for any `exec`.
pub fn simulate_ensemble(
    spec: &ProcessSpec,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n_paths: usize,
    indices: &[usize],
    exec: Execution,
) -> Result<EnsembleEstimate> {
    ensure_param!(n_paths >= 1, "ensemble needs at least one path");
    ensure_param!(!indices.is_empty(), "no report times requested");
    ensure_param!(indices.windows(2).all(|w| w[0] < w[1]), "report indices must be strictly increasing");
    ensure_param!(*indices.last().unwrap() <= grid.n_steps(), "report index beyond the grid");
    spec.validate(grid)?;
    let last = *indices.last().unwrap();
    let m = indices.len();
    let moments = reduce_blocks(
        n_paths,
        exec,
        || Moments::zeros(m),
        |acc, r| {
            let mut sampler = PathSampler::new(spec, grid, seed, r as u64).expect("validated spec");
            let mut phase = PhaseAccumulator::new(grid.dt());
            let mut next = 0;
            for k in 0..=last {
                if k == indices[next] {
                    acc.add(next, phase_factor(phase.value()));
                    next += 1;
                    if next == m {
                        break;
                    }
                }
                phase.push(sampler.next().expect("sampler covers the grid"));
            }
        },
        Moments::merge,
    );
    Ok(moments.finish(indices.to_vec(), grid, n_paths))
}

/// Generates and stores `n_paths` full phase paths.
pub fn simulate_phase_paths(
    spec: &ProcessSpec,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n_paths: usize,
    exec: Execution,
) -> Result<Vec<PhasePath>> {
    spec.validate(grid)?;
    map_indexed(n_paths, exec, |r| {
        let path = sample_path(spec, grid, seed, r as u64)?;
        accumulate_phase(&path, grid)
    })
    .into_iter()
    .collect()
}

/// Phases `Φ_r(t_k)` at `indices` for every path, path-major.
///
/// Generates each path only up to the last requested index.
pub fn simulate_phase_samples(
    spec: &ProcessSpec,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n_paths: usize,
    indices: &[usize],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    ensure_param!(indices.windows(2).all(|w| w[0] < w[1]), "report indices must be strictly increasing");
    ensure_param!(indices.last().is_none_or(|&k| k <= grid.n_steps()), "report index beyond the grid");
    spec.validate(grid)?;
    Ok(map_indexed(n_paths, exec, |r| {
        let mut sampler = PathSampler::new(spec, grid, seed, r as u64).expect("validated spec");
        let mut phase = PhaseAccumulator::new(grid.dt());
        let mut out = Vec::with_capacity(indices.len());
        let mut k = 0;
        for &target in indices {
            while k < target {
                phase.push(sampler.next().expect("sampler covers the grid"));
                k += 1;
            }
            out.push(phase.value());
        }
        out
    }))
}

/// Mean and standard error at `indices` from stored phase paths.
pub fn estimate_from_phases(phases: &[PhasePath], grid: &TimeGrid, indices: &[usize]) -> Result<EnsembleEstimate> {
    ensure_param!(!phases.is_empty(), "ensemble is empty");
    ensure_param!(phases.iter().all(|p| p.len() == grid.len()), "phase paths do not match the grid");
    ensure_param!(indices.iter().all(|&k| k < grid.len()), "report index beyond the grid");
    let m = indices.len();
    let moments = reduce_blocks(
        phases.len(),
        Execution::Serial,
        || Moments::zeros(m),
        |acc, r| {
            for (j, &k) in indices.iter().enumerate() {
                acc.add(j, phase_factor(phases[r].at(k)));
            }
        },
        Moments::merge,
    );
    Ok(moments.finish(indices.to_vec(), grid, phases.len()))
}
