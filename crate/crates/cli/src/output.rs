//! File output helpers: stable number formatting, atomic writes and the
//! beampattern tables.

use std::path::{Path, PathBuf};

use dfrc_core::linalg::CVector;
use dfrc_core::radarlink::{beampattern_grid_deg, receive_beampattern, transmit_beampattern};
use dfrc_core::scenario::{linear_to_db, ArrayGeometry};

use crate::CliError;

/// Locale-independent, round-trippable: `1.5e-3`, `inf`, empty for NaN.
pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Serializes rows to CSV in memory and writes them atomically.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.into_error(),
    })?;
    write_atomic(path, &bytes)
}

pub const BEAMPATTERN_HEADER: [&str; 3] = ["angle_deg", "power_linear", "power_db"];

/// `(angle_deg, linear, dB relative to the grid peak)` rows.
pub fn beampattern_rows(values: &[(f64, f64)]) -> Vec<Vec<String>> {
    let peak = values.iter().map(|v| v.1).fold(0.0, f64::max);
    values
        .iter()
        .map(|&(a, p)| vec![fmt_f(a), fmt_f(p), fmt_f(linear_to_db(p / peak))])
        .collect()
}

pub fn tx_pattern(u: &CVector, tx: &ArrayGeometry, f: f64) -> Vec<(f64, f64)> {
    beampattern_grid_deg()
        .into_iter()
        .map(|a| (a, transmit_beampattern(u, tx, f, a.to_radians())))
        .collect()
}

pub fn rx_pattern(w: &CVector, rx: &ArrayGeometry, f: f64) -> Vec<(f64, f64)> {
    beampattern_grid_deg()
        .into_iter()
        .map(|a| (a, receive_beampattern(w, rx, f, a.to_radians())))
        .collect()
}

pub fn write_beampattern(path: &Path, values: &[(f64, f64)]) -> Result<(), CliError> {
    let header: Vec<String> = BEAMPATTERN_HEADER.iter().map(|s| s.to_string()).collect();
    write_csv(path, &header, &beampattern_rows(values))
}
