//! Two-column text spectra (`energy_meV counts`), `#` starts a comment.

use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{SpectralGrid, Spectrum};

/// Relative tolerance on the spacing of imported energy columns, as a fraction of the step.
const SPACING_TOLERANCE: f64 = 1e-3;

/// Parses whitespace- or comma-separated columns into a uniformly sampled spectrum.
pub fn parse_two_column(text: &str) -> Result<Spectrum> {
    let mut energies = Vec::new();
    let mut counts = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: n + 1,
                reason: format!("expected two columns, found {}", fields.len()),
            });
        }
        let parse = |f: &str| {
            f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line: n + 1,
                reason: format!("`{f}` is not a finite number"),
            })
        };
        energies.push(parse(fields[0])?);
        counts.push(parse(fields[1])?);
    }
    if energies.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let n = energies.len();
    let step = (energies[n - 1] - energies[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::InvalidInput("energies must be increasing".into()));
    }
    for (i, e) in energies.iter().enumerate() {
        if (e - (energies[0] + step * i as f64)).abs() > SPACING_TOLERANCE * step {
            return Err(Error::InvalidInput(format!("energy grid is not uniform near sample {}", i + 1)));
        }
    }
    let grid = SpectralGrid::new(energies[0], energies[n - 1], n)?;
    Spectrum::from_measurement(grid, counts)
}

pub fn read_two_column(path: impl AsRef<Path>) -> Result<Spectrum> {
    parse_two_column(&std::fs::read_to_string(path)?)
}
