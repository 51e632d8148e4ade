//! Flat `key = value` experiment configs.
//!
//! ```text
//! # smooth Forchheimer, overlap study
//! problem = forchheimer1d
//! cells_per_subdomain = 25
//! subdomains = 10, 20, 40
//! overlap = 1, 3, 5
//! beta = 1
//! methods = raspen1, aspin1, raspen2, aspin2
//! ```
//!
//! List values are comma separated. Unknown keys are rejected so that typos
//! do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use raspen_core::{DecompositionLayout, JacobianMode, PreconditionerKind, ResidualRestriction, SolverSettings};

use crate::error::{LabError, Result};
use crate::fields::{self, RandomField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Forchheimer1d,
    Diffusion2d,
}

/// Everything the harness can run for one layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Global Newton with a direct solve, no decomposition.
    Newton,
    RasFp,
    AsFp,
    Ras2Fp,
    As2Fp,
    Raspen1,
    Aspin1,
    Raspen2,
    Aspin2,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Newton,
        Method::RasFp,
        Method::AsFp,
        Method::Ras2Fp,
        Method::As2Fp,
        Method::Raspen1,
        Method::Aspin1,
        Method::Raspen2,
        Method::Aspin2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::RasFp => "ras-fp",
            Method::AsFp => "as-fp",
            Method::Ras2Fp => "ras2-fp",
            Method::As2Fp => "as2-fp",
            Method::Raspen1 => "raspen1",
            Method::Aspin1 => "aspin1",
            Method::Raspen2 => "raspen2",
            Method::Aspin2 => "aspin2",
        }
    }

    /// The preconditioned function behind the method, if any.
    pub fn kind(self) -> Option<PreconditionerKind> {
        match self {
            Method::Newton => None,
            Method::RasFp | Method::Raspen1 => Some(PreconditionerKind::Raspen1),
            Method::AsFp | Method::Aspin1 => Some(PreconditionerKind::Aspin1),
            Method::Ras2Fp | Method::Raspen2 => Some(PreconditionerKind::Raspen2),
            Method::As2Fp | Method::Aspin2 => Some(PreconditionerKind::Aspin2),
        }
    }

    pub fn is_fixed_point(self) -> bool {
        matches!(self, Method::RasFp | Method::AsFp | Method::Ras2Fp | Method::As2Fp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    /// `λ = f = cos x`
    Smooth,
    Random {
        seed: u64,
        lambda_min: f64,
        lambda_max: f64,
        amplitude: f64,
        omega: f64,
    },
    /// Column files of cell-averaged `λ` and cell-integrated `f`.
    File { lambda: PathBuf, source: PathBuf },
}

impl FieldSpec {
    pub fn random_field(&self) -> Option<RandomField> {
        match *self {
            FieldSpec::Random {
                seed,
                lambda_min,
                lambda_max,
                amplitude,
                omega,
            } => Some(RandomField {
                seed,
                lambda_min,
                lambda_max,
                amplitude,
                omega,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    Zero,
    /// Linear interpolation of the boundary data (1D only).
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Total cells (1D) or cells per side (2D) for each subdomain count;
    /// `None` means `cells_per_subdomain` decides.
    pub cells: Option<usize>,
    pub cells_per_subdomain: Option<usize>,
    pub subdomains: Vec<usize>,
    pub overlaps: Vec<usize>,
    pub betas: Vec<f64>,
    pub methods: Vec<Method>,
    pub aspin1_jacobian: JacobianMode,
    pub aspin2_jacobian: JacobianMode,
    pub coarse_restriction: ResidualRestriction,
    pub length: f64,
    pub field: FieldSpec,
    /// Run the β list as one warm-started chain per layout.
    pub continuation: bool,
    pub initial_guess: InitialGuess,
    pub settings: SolverSettings,
    pub curves: bool,
    pub out: Option<PathBuf>,
    /// The parsed key/value pairs, echoed into the summary.
    pub raw: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "problem",
    "cells",
    "cells_per_subdomain",
    "subdomains",
    "overlap",
    "beta",
    "methods",
    "aspin1_jacobian",
    "aspin2_jacobian",
    "coarse_restriction",
    "length",
    "field",
    "seed",
    "lambda_min",
    "lambda_max",
    "amplitude",
    "omega",
    "lambda_file",
    "source_file",
    "continuation",
    "initial_guess",
    "inner_tol",
    "outer_tol",
    "gmres_tol",
    "max_inner",
    "max_outer",
    "max_gmres",
    "max_steps",
    "divergence_threshold",
    "curves",
    "out",
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative field files are resolved against the config's directory
        if let FieldSpec::File { lambda, source } = &mut cfg.field {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [lambda, source] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = parse_pairs(text)?;
        let get = |k: &str| raw.get(k).map(String::as_str);

        let problem = match get("problem").unwrap_or("forchheimer1d") {
            "forchheimer1d" => ProblemKind::Forchheimer1d,
            "diffusion2d" => ProblemKind::Diffusion2d,
            other => return Err(LabError::Config(format!("unknown problem `{other}`"))),
        };
        let methods = match get("methods") {
            Some(v) => list(v)?,
            None => Vec::new(),
        };
        let field = match get("field").unwrap_or("smooth") {
            "smooth" => FieldSpec::Smooth,
            "random" => {
                let d = RandomField::default();
                FieldSpec::Random {
                    seed: scalar(get("seed"), d.seed)?,
                    lambda_min: scalar(get("lambda_min"), d.lambda_min)?,
                    lambda_max: scalar(get("lambda_max"), d.lambda_max)?,
                    amplitude: scalar(get("amplitude"), d.amplitude)?,
                    omega: scalar(get("omega"), d.omega)?,
                }
            }
            "file" => {
                let need = |k: &str| {
                    get(k)
                        .map(PathBuf::from)
                        .ok_or_else(|| LabError::Config(format!("field = file needs `{k}`")))
                };
                FieldSpec::File {
                    lambda: need("lambda_file")?,
                    source: need("source_file")?,
                }
            }
            other => return Err(LabError::Config(format!("unknown field `{other}`"))),
        };
        let d = SolverSettings::default();
        let settings = SolverSettings {
            inner_tol: scalar(get("inner_tol"), d.inner_tol)?,
            outer_tol: scalar(get("outer_tol"), d.outer_tol)?,
            gmres_tol: scalar(get("gmres_tol"), d.gmres_tol)?,
            max_inner: scalar(get("max_inner"), d.max_inner)?,
            max_outer: scalar(get("max_outer"), d.max_outer)?,
            max_gmres: get("max_gmres").map(parse_value).transpose()?,
            max_fixed_point_steps: scalar(get("max_steps"), d.max_fixed_point_steps)?,
            divergence_threshold: scalar(get("divergence_threshold"), d.divergence_threshold)?,
        };
        let cfg = ExperimentConfig {
            problem,
            cells: get("cells").map(parse_value).transpose()?,
            cells_per_subdomain: get("cells_per_subdomain").map(parse_value).transpose()?,
            subdomains: list(get("subdomains").unwrap_or("10"))?,
            overlaps: list(get("overlap").unwrap_or("1"))?,
            betas: match get("beta") {
                Some(v) => list(v)?,
                None if problem == ProblemKind::Forchheimer1d => vec![1.0],
                None => Vec::new(),
            },
            methods,
            aspin1_jacobian: mode(get("aspin1_jacobian"))?,
            aspin2_jacobian: mode(get("aspin2_jacobian"))?,
            coarse_restriction: match get("coarse_restriction").unwrap_or("transpose") {
                "transpose" => ResidualRestriction::Transpose,
                "sum" => ResidualRestriction::BlockSum,
                other => return Err(LabError::Config(format!("unknown coarse_restriction `{other}`"))),
            },
            length: scalar(get("length"), 1.5)?,
            field,
            continuation: scalar(get("continuation"), false)?,
            initial_guess: match get("initial_guess").unwrap_or("zero") {
                "zero" => InitialGuess::Zero,
                "linear" => InitialGuess::Linear,
                other => return Err(LabError::Config(format!("unknown initial_guess `{other}`"))),
            },
            settings,
            curves: scalar(get("curves"), true)?,
            out: get("out").map(PathBuf::from),
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the random-field seed; the echo in `raw` follows.
    pub fn set_seed(&mut self, seed: u64) {
        if let FieldSpec::Random { seed: s, .. } = &mut self.field {
            *s = seed;
        }
        self.raw.insert("seed".into(), seed.to_string());
    }

    pub fn seed(&self) -> Option<u64> {
        match self.field {
            FieldSpec::Random { seed, .. } => Some(seed),
            _ => self.raw.get("seed").and_then(|s| s.parse().ok()),
        }
    }

    /// Cell count (1D) or cells per side (2D) for `subdomains` subdomains
    /// (per side in 2D).
    pub fn cells_for(&self, subdomains: usize) -> usize {
        match (self.cells, self.cells_per_subdomain) {
            (Some(c), _) => c,
            (None, Some(per)) => per * subdomains,
            (None, None) => 25 * subdomains,
        }
    }

    pub fn layout(&self, subdomains: usize, overlap: usize) -> raspen_core::Result<DecompositionLayout> {
        let n = self.cells_for(subdomains);
        let layout = match self.problem {
            ProblemKind::Forchheimer1d => DecompositionLayout::build_1d(n, subdomains, overlap)?,
            ProblemKind::Diffusion2d => DecompositionLayout::build_2d(n, n, subdomains, overlap)?,
        };
        Ok(layout.with_residual_restriction(self.coarse_restriction))
    }

    pub fn jacobian_mode(&self, kind: PreconditionerKind) -> JacobianMode {
        match kind {
            PreconditionerKind::Aspin1 => self.aspin1_jacobian,
            PreconditionerKind::Aspin2 => self.aspin2_jacobian,
            _ => JacobianMode::Exact,
        }
    }

    /// β values a run iterates over; 2D problems have none.
    pub fn beta_values(&self) -> Vec<Option<f64>> {
        match self.problem {
            ProblemKind::Forchheimer1d => self.betas.iter().copied().map(Some).collect(),
            ProblemKind::Diffusion2d => vec![None],
        }
    }

    /// Checks every combination before anything runs.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.methods.is_empty() {
            return bad("`methods` must list at least one method".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("`methods` lists a method twice".into());
        }
        if self.subdomains.is_empty() || self.overlaps.is_empty() {
            return bad("`subdomains` and `overlap` must not be empty".into());
        }
        if self.cells.is_some() && self.cells_per_subdomain.is_some() {
            return bad("give either `cells` or `cells_per_subdomain`, not both".into());
        }
        if let Err(e) = self.settings.validate() {
            return bad(e.to_string());
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("`length` must be positive".into());
        }
        match self.problem {
            ProblemKind::Forchheimer1d => {
                if self.betas.is_empty() {
                    return bad("`beta` must not be empty".into());
                }
                if self.betas.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
                    return bad("β values must be finite and >= 0".into());
                }
                if self.continuation && self.betas.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("continuation needs strictly increasing β values".into());
                }
            }
            ProblemKind::Diffusion2d => {
                if self.raw.contains_key("beta") || self.continuation {
                    return bad("diffusion2d takes no β".into());
                }
                if self.field != FieldSpec::Smooth || self.raw.contains_key("length") {
                    return bad("diffusion2d has a fixed source on the unit square".into());
                }
                if self.initial_guess == InitialGuess::Linear {
                    return bad("initial_guess = linear is only defined in 1D".into());
                }
            }
        }
        if let Some(f) = self.field.random_field() {
            f.validate()?;
        }
        for &i in &self.subdomains {
            for &k in &self.overlaps {
                if let Err(e) = self.layout(i, k) {
                    return bad(format!("subdomains = {i}, overlap = {k}: {e}"));
                }
            }
        }
        if let FieldSpec::File { lambda, .. } = &self.field {
            if self.cells.is_none() {
                return bad(format!(
                    "field files ({}) fix the mesh, so `cells` must be given",
                    lambda.display()
                ));
            }
        }
        Ok(())
    }

    /// Loads the field files, checking their length against `cells`.
    pub fn load_field_files(&self) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let FieldSpec::File { lambda, source } = &self.field else {
            return Ok(None);
        };
        let l = fields::read_column_file(lambda)?;
        let s = fields::read_column_file(source)?;
        let n = self.cells.unwrap_or(0);
        if l.len() != n || s.len() != n {
            return Err(LabError::Config(format!(
                "field files have {} and {} entries, expected {n}",
                l.len(),
                s.len()
            )));
        }
        Ok(Some((l, s)))
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(LabError::Config(format!("line {}: expected `key = value`", lineno + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(LabError::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(LabError::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| LabError::Config(format!("cannot parse `{v}`")))
}

fn scalar<T: FromStr>(v: Option<&str>, default: T) -> Result<T> {
    v.map_or(Ok(default), parse_value)
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| LabError::Config(format!("cannot parse list item `{s}`"))))
        .collect()
}

fn mode(v: Option<&str>) -> Result<JacobianMode> {
    match v.unwrap_or("inexact") {
        "inexact" => Ok(JacobianMode::Inexact),
        "exact" => Ok(JacobianMode::Exact),
        other => Err(LabError::Config(format!("unknown jacobian mode `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_defaults() {
        let cfg = ExperimentConfig::parse(
            "problem = forchheimer1d\nsubdomains = 10, 20 # two sizes\noverlap = 1,3,5\nmethods = raspen1, aspin2\n",
        )
        .unwrap();
        assert_eq!(cfg.subdomains, vec![10, 20]);
        assert_eq!(cfg.overlaps, vec![1, 3, 5]);
        assert_eq!(cfg.methods, vec![Method::Raspen1, Method::Aspin2]);
        assert_eq!(cfg.betas, vec![1.0]);
        assert_eq!(cfg.cells_for(20), 500);
        assert_eq!(cfg.length, 1.5);
        assert_eq!(cfg.aspin2_jacobian, JacobianMode::Inexact);
        assert_eq!(cfg.coarse_restriction, ResidualRestriction::Transpose);
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let e = ExperimentConfig::parse("problem = forchheimer1d\nmethods =\n").unwrap_err();
        assert!(e.to_string().contains("at least one method"));
        assert!(ExperimentConfig::parse("subdomains = 4\n").is_err());
    }

    #[test]
    fn rejects_unknown_and_invalid_entries() {
        assert!(ExperimentConfig::parse("methods = raspen1\nsubdomain = 4").is_err());
        assert!(ExperimentConfig::parse("methods = raspen3").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\nmethods = aspin1").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\nbeta = -1").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\ncontinuation = true\nbeta = 1, 0.5").is_err());
        // 3 cells cannot host 4 subdomains, and overlap 4 runs past 3-cell blocks
        assert!(ExperimentConfig::parse("methods = raspen1\ncells = 3\nsubdomains = 4").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\ncells = 9\nsubdomains = 3\noverlap = 4").is_err());
        assert!(ExperimentConfig::parse("problem = diffusion2d\nmethods = raspen1\nbeta = 1").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\nfield = file").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\ninner_tol = 0").is_err());
        assert!(ExperimentConfig::parse("methods = raspen1\nno equals sign").is_err());
    }

    #[test]
    fn random_field_keys() {
        let cfg = ExperimentConfig::parse("methods = raspen1\nfield = random\nseed = 7\nomega = 2").unwrap();
        let f = cfg.field.random_field().unwrap();
        assert_eq!((f.seed, f.omega, f.amplitude), (7, 2.0, 1.0));
    }

    #[test]
    fn two_dimensional_layouts() {
        let cfg = ExperimentConfig::parse(
            "problem = diffusion2d\ncells_per_subdomain = 8\nsubdomains = 2, 4\nmethods = raspen2",
        )
        .unwrap();
        assert_eq!(cfg.beta_values(), vec![None]);
        let l = cfg.layout(4, 1).unwrap();
        assert_eq!(l.n_cells(), 32 * 32);
        assert_eq!(l.subdomain_count(), 16);
    }
}
