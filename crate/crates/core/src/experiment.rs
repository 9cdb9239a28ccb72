//! End-to-end runs: configuration, the coherence table, static-noise
//! calibration and table analysis. File handling lives in the CLI; everything
//! here is a pure function of the configuration.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{blp_measure, noise_tolerance, MarkovianityReport};
use crate::apparatus::{
    apparatus_state, build_overlap_matrix, calibrate_static_rtn, coherence_from_counts_with, count_coherence_stderr,
    poisson_draw, weighted_coherence, CalibrationResult, DetectorModel, EstimatorForm, PixelResponse, SpectralModel,
    Spectrum, TabulatedSpectrum,
};
use crate::channel::{
    analytic_coherence, report_indices, simulate_ensemble, simulate_phase_samples, HamiltonianParams,
};
use crate::error::{ensure_param, Error, Result};
use crate::exec::Execution;
use crate::stochastic::{NoiseKind, ProcessSpec, RtnInitial, SeedSpec, StreamDomain, TimeGrid};
use crate::tomography::{
    expected_tomography_counts, reconstruct_linear_inversion, simulate_tomography_counts, tomographic_coherence,
    tomographic_coherence_stderr,
};

/// Quoted one-sigma uncertainty of the fitted purity.
pub const QUOTED_P_UNCERTAINTY: f64 = 0.02;
/// Quoted one-sigma uncertainty of the fitted baseline count.
pub const QUOTED_N_UNCERTAINTY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessConfig {
    pub kind: NoiseKind,
    pub gamma: f64,
    pub rtn_initial: RtnInitial,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self { kind: NoiseKind::Rtn, gamma: 0.1, rtn_initial: RtnInitial::RandomEquiprobable }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianConfig {
    pub epsilon: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { epsilon: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Report every `report_stride`-th grid point.
    pub report_stride: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dt: 0.001, n_steps: 8000, report_stride: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_paths: 100, master_seed: 1, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApparatusConfig {
    pub enabled: bool,
    /// Baseline mean count `N` per acquisition.
    pub n_mean: f64,
    pub p: f64,
    pub acquisition_time_s: f64,
    /// Two-column spectrum file; a flat spectrum when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum_file: Option<String>,
    pub pixel_response: PixelResponse,
    pub pixel_pitch_mm: f64,
    pub component_fwhm_mm: f64,
    pub dispersion_nm_per_mm: f64,
    /// Use expected counts instead of Poisson draws.
    pub noiseless: bool,
    pub estimator: EstimatorForm,
    /// Points on the static-noise reference curve.
    pub calibration_points: usize,
    pub calibration_repetitions: usize,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        let detector = DetectorModel::default();
        let model = SpectralModel::default();
        Self {
            enabled: false,
            n_mean: detector.n_mean,
            p: detector.p,
            acquisition_time_s: detector.acquisition_time_s,
            spectrum_file: None,
            pixel_response: model.pixel_response,
            pixel_pitch_mm: model.pixel_pitch_mm,
            component_fwhm_mm: model.component_fwhm_mm,
            dispersion_nm_per_mm: model.dispersion_nm_per_mm,
            noiseless: false,
            estimator: EstimatorForm::Normalized,
            calibration_points: 301,
            calibration_repetitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    pub enabled: bool,
    /// Mean count for a projector with unit probability.
    pub baseline: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self { enabled: false, baseline: 2.0 * DetectorModel::default().n_mean }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Revival threshold; defaults to three times the largest standard error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub plot_script: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), plot_script: false }
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub process: ProcessConfig,
    pub hamiltonian: HamiltonianConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub apparatus: ApparatusConfig,
    pub tomography: TomographyConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.process().validate(&grid)?;
        ensure_param!(self.grid.report_stride >= 1, "grid.report_stride must be at least 1");
        ensure_param!(self.ensemble.n_paths >= 1, "ensemble.n_paths must be at least 1");
        ensure_param!(self.hamiltonian.epsilon.is_finite(), "hamiltonian.epsilon must be finite");
        if self.apparatus.enabled {
            self.detector().validate()?;
            self.spectral_model(None).validate()?;
            ensure_param!(self.apparatus.calibration_points >= 3, "apparatus.calibration_points must be at least 3");
            ensure_param!(
                self.apparatus.calibration_repetitions >= 1,
                "apparatus.calibration_repetitions must be at least 1"
            );
        }
        if self.tomography.enabled {
            ensure_param!(self.apparatus.enabled, "tomography requires apparatus.enabled = true");
            ensure_param!(
                self.tomography.baseline.is_finite() && self.tomography.baseline > 0.0,
                "tomography.baseline must be positive"
            );
        }
        if let Some(tol) = self.analysis.noise_tolerance {
            ensure_param!(tol.is_finite() && tol >= 0.0, "analysis.noise_tolerance must be non-negative");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.dt, self.grid.n_steps)
    }

    pub fn process(&self) -> ProcessSpec {
        ProcessSpec { kind: self.process.kind, gamma: self.process.gamma, rtn_initial: self.process.rtn_initial }
    }

    pub fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.ensemble.master_seed)
    }

    pub fn execution(&self) -> Execution {
        match self.ensemble.workers {
            0 => Execution::Parallel,
            w => Execution::Workers(w),
        }
    }

    pub fn hamiltonian(&self) -> HamiltonianParams {
        HamiltonianParams { epsilon: self.hamiltonian.epsilon }
    }

    pub fn detector(&self) -> DetectorModel {
        DetectorModel {
            n_mean: self.apparatus.n_mean,
            p: self.apparatus.p,
            acquisition_time_s: self.apparatus.acquisition_time_s,
        }
    }

    /// Pixel model with one pixel per trajectory.
    pub fn spectral_model(&self, spectrum: Option<TabulatedSpectrum>) -> SpectralModel {
        SpectralModel {
            n_pixels: self.ensemble.n_paths,
            pixel_pitch_mm: self.apparatus.pixel_pitch_mm,
            component_fwhm_mm: self.apparatus.component_fwhm_mm,
            dispersion_nm_per_mm: self.apparatus.dispersion_nm_per_mm,
            pixel_response: self.apparatus.pixel_response,
            spectrum: spectrum.map_or(Spectrum::Rectangular, Spectrum::Tabulated),
            ..SpectralModel::default()
        }
    }
}

/// Count-based columns of a table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountColumns {
    pub coherence: f64,
    pub raw: f64,
    pub stderr: f64,
}

/// Tomography columns of a table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyColumns {
    pub coherence: Complex64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub t: f64,
    pub c_analytic: f64,
    pub c_mc: Complex64,
    pub mc_stderr: f64,
    /// Lab-frame coherence `e^{-2iεt} C_mc`.
    pub c_lab: Complex64,
    pub counts: Option<CountColumns>,
    pub tomography: Option<TomographyColumns>,
}

impl TableRow {
    /// Trace distance of the optimal pair, `|C_mc|`.
    pub fn d(&self) -> f64 {
        self.c_mc.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub rows: Vec<TableRow>,
    pub report: MarkovianityReport,
    pub calibration: Option<CalibrationResult>,
}

impl SimulationOutput {
    pub fn header(&self) -> Vec<&'static str> {
        let mut h =
            vec!["t", "C_analytic", "C_mc_real", "C_mc_imag", "C_mc_abs", "mc_stderr", "D", "C_lab_real", "C_lab_imag"];
        if self.rows.first().is_some_and(|r| r.counts.is_some()) {
            h.extend(["C_counts", "counts_raw", "C_counts_stderr"]);
        }
        if self.rows.first().is_some_and(|r| r.tomography.is_some()) {
            h.extend(["C_tomo_real", "C_tomo_imag", "C_tomo_stderr"]);
        }
        h
    }

    /// Comma-separated table with one header row. Floats are written in
    /// shortest round-trip form, so equal runs give byte-identical files.
    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells =
                vec![r.t, r.c_analytic, r.c_mc.re, r.c_mc.im, r.d(), r.mc_stderr, r.d(), r.c_lab.re, r.c_lab.im];
            if let Some(c) = r.counts {
                cells.extend([c.coherence, c.raw, c.stderr]);
            }
            if let Some(tm) = r.tomography {
                cells.extend([tm.coherence.re, tm.coherence.im, tm.stderr]);
            }
            let line: Vec<String> = cells.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

/// Monte Carlo coherence table, optionally with emulated counts and tomography.
pub fn run_simulation(cfg: &RunConfig, spectrum: Option<&TabulatedSpectrum>) -> Result<SimulationOutput> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let spec = cfg.process();
    let seed = cfg.seed();
    let exec = cfg.execution();
    let indices = report_indices(&grid, cfg.grid.report_stride)?;
    let est = simulate_ensemble(&spec, &grid, &seed, cfg.ensemble.n_paths, &indices, exec)?;
    let hamiltonian = cfg.hamiltonian();

    let mut rows = Vec::with_capacity(indices.len());
    for j in 0..indices.len() {
        let t = est.times[j];
        rows.push(TableRow {
            t,
            c_analytic: analytic_coherence(&spec, t)?,
            c_mc: est.mean[j],
            mc_stderr: est.stderr[j],
            c_lab: hamiltonian.lab_frame_coherence(est.mean[j], t),
            counts: None,
            tomography: None,
        });
    }

    let mut calibration = None;
    if cfg.apparatus.enabled {
        let overlap = build_overlap_matrix(&cfg.spectral_model(spectrum.cloned()))?;
        let weights = overlap.weights();
        let cal = draw_calibration(cfg, &static_reference(cfg, &weights)?, 0)?.1;
        let detector = cfg.detector();
        let phases = simulate_phase_samples(&spec, &grid, &seed, cfg.ensemble.n_paths, &indices, exec)?;
        let mut pixel_phases = vec![0.0; phases.len()];
        for (j, row) in rows.iter_mut().enumerate() {
            for (dst, path) in pixel_phases.iter_mut().zip(&phases) {
                *dst = path[j];
            }
            let rho = apparatus_state(&weights, &pixel_phases, detector.p)?;
            let c_w = weighted_coherence(&weights, &pixel_phases);
            let mean = detector.expected_count(c_w.re)?;
            let raw = if cfg.apparatus.noiseless {
                mean
            } else {
                poisson_draw(mean, &mut seed.stream(StreamDomain::Counts, j as u64))? as f64
            };
            row.counts = Some(CountColumns {
                coherence: coherence_from_counts_with(raw, &cal, cfg.apparatus.estimator)?,
                raw,
                stderr: count_coherence_stderr(raw, &cal),
            });
            if cfg.tomography.enabled {
                let counts = if cfg.apparatus.noiseless {
                    expected_tomography_counts(&rho, cfg.tomography.baseline)?
                } else {
                    let mut rng = seed.stream(StreamDomain::Tomography, j as u64);
                    simulate_tomography_counts(&rho, cfg.tomography.baseline, &mut rng)?
                };
                let rho_hat = reconstruct_linear_inversion(&counts)?;
                row.tomography = Some(TomographyColumns {
                    coherence: tomographic_coherence(&rho_hat, cal.p_hat)?,
                    stderr: tomographic_coherence_stderr(&counts, cal.p_hat)?,
                });
            }
        }
        calibration = Some(cal);
    }

    let d: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.d())).collect();
    let tol = cfg.analysis.noise_tolerance.unwrap_or_else(|| noise_tolerance(&est.stderr));
    let report = blp_measure(&d, tol)?;
    Ok(SimulationOutput { rows, report, calibration })
}

/// Expected counts `(t_i, N(1 + p Re C̃(t_i)))` of the static-noise reference
/// run on the calibration grid.
fn static_reference(cfg: &RunConfig, weights: &[f64]) -> Result<Vec<(f64, f64)>> {
    let stride = cfg.grid.report_stride;
    let grid = TimeGrid::new(cfg.grid.dt, (cfg.apparatus.calibration_points - 1) * stride)?;
    let indices = report_indices(&grid, stride)?;
    let spec = ProcessSpec::rtn_balanced(0.0);
    let phases = simulate_phase_samples(&spec, &grid, &cfg.seed(), weights.len(), &indices, Execution::Serial)?;
    let detector = cfg.detector();
    let mut pixel_phases = vec![0.0; weights.len()];
    let mut means = Vec::with_capacity(indices.len());
    for (j, &k) in indices.iter().enumerate() {
        for (dst, path) in pixel_phases.iter_mut().zip(&phases) {
            *dst = path[j];
        }
        means.push((grid.time(k), detector.expected_count(weighted_coherence(weights, &pixel_phases).re)?));
    }
    Ok(means)
}

/// Counts for repetition `rep` of the reference run, and their fit.
fn draw_calibration(cfg: &RunConfig, means: &[(f64, f64)], rep: u64) -> Result<(Vec<(f64, f64)>, CalibrationResult)> {
    let data = if cfg.apparatus.noiseless {
        means.to_vec()
    } else {
        let mut rng = cfg.seed().stream(StreamDomain::Calibration, rep);
        means.iter().map(|&(t, mean)| Ok((t, poisson_draw(mean, &mut rng)? as f64))).collect::<Result<Vec<_>>>()?
    };
    let fit = calibrate_static_rtn(&data)?;
    Ok((data, fit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutput {
    /// Reference curve of the first repetition.
    pub data: Vec<(f64, f64)>,
    /// One fit per repetition; the first is the primary result.
    pub fits: Vec<CalibrationResult>,
    /// Fraction of repetitions with `|p̂ - p| ≤ 0.02` and `|N̂ - N| ≤ 2`.
    pub coverage: f64,
}

impl CalibrationOutput {
    pub fn primary(&self) -> &CalibrationResult {
        &self.fits[0]
    }
}

/// Simulates and fits the static-noise reference curve.
pub fn run_calibration(cfg: &RunConfig, spectrum: Option<&TabulatedSpectrum>) -> Result<CalibrationOutput> {
    cfg.validate()?;
    ensure_param!(cfg.apparatus.enabled, "calibration requires apparatus.enabled = true");
    let weights = build_overlap_matrix(&cfg.spectral_model(spectrum.cloned()))?.weights();
    let means = static_reference(cfg, &weights)?;
    let mut fits = Vec::with_capacity(cfg.apparatus.calibration_repetitions);
    let mut data = Vec::new();
    for rep in 0..cfg.apparatus.calibration_repetitions {
        let (d, fit) = draw_calibration(cfg, &means, rep as u64)?;
        if rep == 0 {
            data = d;
        }
        fits.push(fit);
    }
    let truth = cfg.detector();
    let hits = fits
        .iter()
        .filter(|f| {
            (f.p_hat - truth.p).abs() <= QUOTED_P_UNCERTAINTY && (f.n_hat - truth.n_mean).abs() <= QUOTED_N_UNCERTAINTY
        })
        .count();
    Ok(CalibrationOutput { data, coverage: hits as f64 / fits.len() as f64, fits })
}

/// Numeric table with a single header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CoherenceTable {
    /// Parses comma-separated numeric data. Errors name the 1-based line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines =
            text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, head) = lines.next().ok_or_else(|| Error::Data("table is empty".into()))?;
        let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(Error::Data(format!(
                    "row {}: expected {} columns, found {}",
                    lineno + 1,
                    header.len(),
                    cells.len()
                )));
            }
            let row = cells
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| {
                    Error::Data(format!("row {}: non-numeric or non-finite value in {line:?}", lineno + 1))
                })?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// BLP report for a table carrying `t` and `D` (or `C_mc_abs`) columns.
///
/// Without an explicit tolerance, three times the largest `mc_stderr` is used
/// when that column exists.
pub fn analyze_table(table: &CoherenceTable, tolerance: Option<f64>) -> Result<MarkovianityReport> {
    let t = table.column("t").ok_or_else(|| Error::Data("table has no 't' column".into()))?;
    let d = table
        .column("D")
        .or_else(|| table.column("C_mc_abs"))
        .ok_or_else(|| Error::Data("table has neither a 'D' nor a 'C_mc_abs' column".into()))?;
    if let Some(k) = t.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!("row {}: time {} does not increase", k + 3, t[k + 1])));
    }
    let tol = match tolerance {
        Some(tol) => tol,
        None => noise_tolerance(&table.column("mc_stderr").unwrap_or_default()),
    };
    let series: Vec<(f64, f64)> = t.into_iter().zip(d).collect();
    blp_measure(&series, tol)
}
