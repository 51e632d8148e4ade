//! Seeded random-contrast permeability fields and column-file IO.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raspen_core::problems::cell_integrals;
use raspen_core::{ForchheimerProblem1D, Result as CoreResult};

use crate::error::{LabError, Result};

/// Log-uniform per-cell permeability in `[lambda_min, lambda_max]` and an
/// oscillatory source `f(x) = amplitude · sin(omega π x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomField {
    pub seed: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub amplitude: f64,
    pub omega: f64,
}

impl Default for RandomField {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda_min: 1e-2,
            lambda_max: 1e2,
            amplitude: 1.0,
            omega: 4.0,
        }
    }
}

impl RandomField {
    pub fn lambda(&self, cells: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = (self.lambda_min.ln(), self.lambda_max.ln());
        (0..cells)
            .map(|_| {
                let t: f64 = rng.random();
                (lo + t * (hi - lo)).exp()
            })
            .collect()
    }

    /// Cell integrals of the source.
    pub fn source(&self, cells: usize, length: f64) -> Vec<f64> {
        let k = self.omega * std::f64::consts::PI;
        let a = self.amplitude;
        if k == 0.0 {
            return vec![0.0; cells];
        }
        cell_integrals(cells, length, |x| -a * (k * x).cos() / k)
    }

    pub fn problem(&self, cells: usize, length: f64, beta: f64) -> CoreResult<ForchheimerProblem1D> {
        ForchheimerProblem1D::new(
            length,
            beta,
            self.lambda(cells),
            self.source(cells, length),
            ForchheimerProblem1D::DEFAULT_DIRICHLET,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min && self.lambda_max.is_finite()) {
            return Err(LabError::Config(format!(
                "permeability range [{}, {}] must be positive and ordered",
                self.lambda_min, self.lambda_max
            )));
        }
        if !self.amplitude.is_finite() || !self.omega.is_finite() {
            return Err(LabError::Config("source amplitude and frequency must be finite".into()));
        }
        Ok(())
    }
}

/// Writes `index value` lines, one per cell.
pub fn write_column_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::new();
    for (i, v) in values.iter().enumerate() {
        // {:e} round-trips f64 exactly
        writeln!(text, "{i} {v:e}").unwrap();
    }
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Reads a column file written by [`write_column_file`]. Blank lines and
/// lines starting with `#` are skipped; indices must be `0..n` in order.
pub fn read_column_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_columns(&text).map_err(|msg| LabError::Config(format!("{}: {msg}", path.display())))
}

pub fn parse_columns(text: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(idx), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `index value`", lineno + 1));
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| format!("line {}: bad index `{idx}`", lineno + 1))?;
        if idx != out.len() {
            return Err(format!("line {}: index {idx} out of order", lineno + 1));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| format!("line {}: bad value `{val}`", lineno + 1))?;
        out.push(val);
    }
    Ok(out)
}
