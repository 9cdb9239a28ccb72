//! Config loading: TOML file, dotted command-line overrides, validation.

use std::fmt;
use std::path::Path;

use dephasing_core::apparatus::TabulatedSpectrum;
use dephasing_core::experiment::RunConfig;
use toml::{Table, Value};

/// Table added to emitted metadata; ignored when the file is read back.
pub const META_TABLE: &str = "meta";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// `(dotted.key, raw value)` pairs in command-line order.
pub type Overrides = Vec<(String, String)>;

/// Pulls `--a.b=value` and `--a.b value` out of `args`.
///
/// Only flags whose name contains a dot are taken; everything after a bare
/// `--` is left alone.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), ConfigError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--" {
            rest.push(arg);
            rest.extend(it.by_ref());
            break;
        }
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, value) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        if name.split('.').any(str::is_empty) {
            return Err(ConfigError(format!("malformed override --{name}")));
        }
        let value = match value {
            Some(v) => v,
            None => it.next().ok_or_else(|| ConfigError(format!("override --{name} has no value")))?,
        };
        overrides.push((name.to_string(), value));
    }
    Ok((rest, overrides))
}

/// Reads a TOML override value; bare words become strings.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_override(table: &mut Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur =
            entry.as_table_mut().ok_or_else(|| ConfigError(format!("override --{key}: '{part}' is not a section")))?;
    }
    cur.insert(leaf.to_string(), parse_value(raw));
    Ok(())
}

/// Builds a config from TOML text plus overrides. A `meta` table is dropped.
pub fn config_from_str(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut table: Table =
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid config: {}", e.to_string().trim_end())))?;
    table.remove(META_TABLE);
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e| ConfigError(format!("invalid config: {}", e.to_string().trim_end())))?;
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<(RunConfig, Option<TabulatedSpectrum>), ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let cfg = config_from_str(&text, overrides)?;
    let spectrum = match &cfg.apparatus.spectrum_file {
        Some(file) => {
            let text = std::fs::read_to_string(file).map_err(|e| ConfigError(format!("{file}: {e}")))?;
            Some(TabulatedSpectrum::parse(&text).map_err(|e| ConfigError(format!("{file}: {e}")))?)
        }
        None => None,
    };
    Ok((cfg, spectrum))
}
