//! Files written by the subcommands.

use std::path::{Path, PathBuf};

use dephasing_core::analysis::MarkovianityReport;
use dephasing_core::experiment::{CalibrationOutput, RunConfig, SimulationOutput};
use dephasing_core::tomography::Projector;
use toml::{Table, Value};

use crate::config::META_TABLE;
use crate::{io_error, Failure};

fn to_toml<T: serde::Serialize>(v: &T) -> Result<Table, Failure> {
    Table::try_from(v).map_err(|e| Failure::Runtime(format!("serializing output: {e}")))
}

fn render(table: &Table) -> Result<String, Failure> {
    toml::to_string(table).map_err(|e| Failure::Runtime(format!("serializing output: {e}")))
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    written.push(path);
    Ok(())
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

/// Config echo plus a `meta` table. Read back as a config, it reproduces the run.
pub fn metadata_toml(cfg: &RunConfig, command: &str) -> Result<String, Failure> {
    let mut table = to_toml(cfg)?;
    let mut meta = Table::new();
    meta.insert("program".into(), Value::String(env!("CARGO_PKG_NAME").into()));
    meta.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    meta.insert("command".into(), Value::String(command.into()));
    meta.insert("rng".into(), Value::String("chacha8, key = (master_seed, domain), stream = index".into()));
    if cfg.tomography.enabled {
        let projectors = Projector::ALL.iter().map(|p| Value::String(p.label().into())).collect();
        meta.insert("projectors".into(), Value::Array(projectors));
    }
    table.insert(META_TABLE.into(), Value::Table(meta));
    render(&table)
}

pub fn report_toml(report: &MarkovianityReport) -> Result<String, Failure> {
    render(&to_toml(report)?)
}

pub fn write_simulation(cfg: &RunConfig, out: &SimulationOutput) -> Result<Vec<PathBuf>, Failure> {
    let dir = output_dir(cfg)?;
    let mut written = Vec::new();
    write(dir.join("coherence.csv"), &out.to_csv(), &mut written)?;
    write(dir.join("report.toml"), &report_toml(&out.report)?, &mut written)?;
    if let Some(cal) = &out.calibration {
        write(dir.join("calibration.toml"), &render(&to_toml(cal)?)?, &mut written)?;
    }
    write(dir.join("metadata.toml"), &metadata_toml(cfg, "simulate")?, &mut written)?;
    if cfg.output.plot_script {
        write(dir.join("plot_coherence.py"), &plot_script(Path::new("coherence.csv"), out), &mut written)?;
    }
    Ok(written)
}

pub fn write_calibration(cfg: &RunConfig, out: &CalibrationOutput) -> Result<Vec<PathBuf>, Failure> {
    let dir = output_dir(cfg)?;
    let mut written = Vec::new();
    let mut doc = to_toml(out.primary())?;
    doc.insert("repetitions".into(), Value::Integer(out.fits.len() as i64));
    doc.insert("coverage".into(), Value::Float(out.coverage));
    if out.fits.len() > 1 {
        let fits = out.fits.iter().map(|f| to_toml(f).map(Value::Table)).collect::<Result<Vec<_>, _>>()?;
        doc.insert("fits".into(), Value::Array(fits));
    }
    write(dir.join("calibration.toml"), &render(&doc)?, &mut written)?;
    let mut csv = String::from("t,counts\n");
    for (t, n) in &out.data {
        csv.push_str(&format!("{t},{n}\n"));
    }
    write(dir.join("calibration_counts.csv"), &csv, &mut written)?;
    write(dir.join("metadata.toml"), &metadata_toml(cfg, "calibrate")?, &mut written)?;
    Ok(written)
}

fn plot_script(table: &Path, out: &SimulationOutput) -> String {
    let header = out.header();
    let mut extra = String::new();
    if header.contains(&"C_counts") {
        extra.push_str("ax.errorbar(d.t, d.C_counts, yerr=d.C_counts_stderr, fmt='o', ms=3, label='counts')\n");
    }
    if header.contains(&"C_tomo_real") {
        extra.push_str("ax.errorbar(d.t, d.C_tomo_real, yerr=d.C_tomo_stderr, fmt='s', ms=3, label='tomography')\n");
    }
    format!(
        r#"import pathlib
import pandas as pd
import matplotlib.pyplot as plt

here = pathlib.Path(__file__).parent
d = pd.read_csv(here / "{table}")
fig, ax = plt.subplots()
ax.fill_between(d.t, d.C_mc_real - 2 * d.mc_stderr, d.C_mc_real + 2 * d.mc_stderr, alpha=0.2)
ax.fill_between(d.t, d.C_mc_real - d.mc_stderr, d.C_mc_real + d.mc_stderr, alpha=0.4)
ax.plot(d.t, d.C_mc_real, label="Monte Carlo")
ax.plot(d.t, d.C_analytic, "k--", label="analytic")
{extra}ax.set_xlabel("t")
ax.set_ylabel("C(t)")
ax.legend()
fig.savefig(here / "coherence.png", dpi=150)
"#,
        table = table.display()
    )
}
