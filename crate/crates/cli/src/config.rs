//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use gis_core::convergence::{AmplitudeRule, ExperimentConfig, ExperimentKind, FamilyConfig, FamilyKind, FrequencyRule};
use gis_core::{Complex64, Endpoint, GridPartition, PiecewiseConst, StringSpec};
use serde::Deserialize;

use crate::expr::parse_expression;
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub string: StringSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub resolvent: ResolventSection,
    pub family: Option<FamilySection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Number(f64),
    Expr(String),
    Samples(Vec<f64>),
}

impl Default for Coefficient {
    fn default() -> Self {
        Self::Number(0.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringSection {
    #[serde(default)]
    pub w: Coefficient,
    pub p: Coefficient,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Windows {
    One([f64; 2]),
    Two([[f64; 2]; 2]),
}

impl Windows {
    pub fn list(&self) -> Vec<(f64, f64)> {
        match self {
            Self::One([a, b]) => vec![(*a, *b)],
            Self::Two([[a, b], [c, d]]) => vec![(*a, *b), (*c, *d)],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub window: Windows,
    pub scan_step: f64,
    pub tol: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { window: Windows::One([0.1, 10.0]), scan_step: 0.01, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventSection {
    pub z_probe: [f64; 2],
}

impl Default for ResolventSection {
    fn default() -> Self {
        Self { z_probe: [0.0, 1.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Fixed(f64),
    /// `"n"` for `k_n = n`.
    Rule(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub kind: FamilyKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default = "linear")]
    pub frequency: Frequency,
    pub seed: Option<u64>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

fn linear() -> Frequency {
    Frequency::Rule("n".into())
}

fn default_n_list() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub z_solution: [f64; 2],
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { kind: ExperimentKind::All, z_solution: [1.0, 0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    Left,
    Right,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub z: [f64; 2],
    pub start: Start,
    /// `[[Re f, Im f], [Re Δ, Im Δ]]` at the starting end.
    pub data: [[f64; 2]; 2],
}

impl Default for SolveSection {
    fn default() -> Self {
        Self { z: [1.0, 0.0], start: Start::Left, data: [[0.0, 0.0], [1.0, 0.0]] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub format: Format,
    pub path: Option<PathBuf>,
}

fn invalid(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {message}"))
}

fn complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

fn finite(path: &str, vals: &[f64]) -> Result<(), CliError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "must be finite"))
    }
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "config".to_string() } else { path };
        invalid(&path, e.into_inner())
    })?;
    cfg.check()?;
    Ok(cfg)
}

impl Config {
    fn check(&self) -> Result<(), CliError> {
        if self.grid.n_cells < 2 {
            return Err(invalid("grid.n_cells", "must be at least 2"));
        }
        let s = &self.spectrum;
        finite("spectrum.scan_step", &[s.scan_step])?;
        finite("spectrum.tol", &[s.tol])?;
        if s.scan_step <= 0.0 {
            return Err(invalid("spectrum.scan_step", "must be positive"));
        }
        if s.tol <= 0.0 {
            return Err(invalid("spectrum.tol", "must be positive"));
        }
        for (lo, hi) in s.window.list() {
            finite("spectrum.window", &[lo, hi])?;
            if lo >= hi {
                return Err(invalid("spectrum.window", format!("[{lo}, {hi}] is empty")));
            }
        }
        finite("resolvent.z_probe", &self.resolvent.z_probe)?;
        finite("experiment.z_solution", &self.experiment.z_solution)?;
        finite("solve.z", &self.solve.z)?;
        finite("solve.data", &self.solve.data.concat())?;
        if let Some(f) = &self.family {
            finite("family.amplitude", &[f.amplitude])?;
            finite("family.power", &[f.power])?;
            if let Frequency::Fixed(k) = f.frequency {
                finite("family.frequency", &[k])?;
            }
            if let Frequency::Rule(r) = &f.frequency {
                if r != "n" {
                    return Err(invalid("family.frequency", format!("expected a number or \"n\", got {r:?}")));
                }
            }
            if f.n_list.is_empty() || f.n_list.contains(&0) {
                return Err(invalid("family.n_list", "must list positive indices"));
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<GridPartition, CliError> {
        GridPartition::new(self.grid.n_cells).map_err(|e| invalid("grid.n_cells", e))
    }

    pub fn string_spec(&self) -> Result<StringSpec, CliError> {
        let part = self.partition()?;
        let w = sample(part, &self.string.w, "string.w")?;
        let p = sample(part, &self.string.p, "string.p")?;
        let w = PiecewiseConst::new(part, w).map_err(|e| invalid("string.w", e))?;
        let p = PiecewiseConst::new(part, p).map_err(|e| invalid("string.p", e))?;
        StringSpec::new(w, p).map_err(|e| invalid("string.p", e))
    }

    pub fn family_config(&self, seed: Option<u64>) -> Result<Option<FamilyConfig>, CliError> {
        let Some(f) = &self.family else {
            return Ok(None);
        };
        let frequency = match f.frequency {
            Frequency::Fixed(k) => FrequencyRule::Fixed(k),
            Frequency::Rule(_) => FrequencyRule::Linear,
        };
        let seed = match (seed, f.seed, f.kind) {
            (Some(s), _, _) | (None, Some(s), _) => s,
            (None, None, FamilyKind::RandomBounded) => {
                return Err(CliError::Usage("random-bounded families need --seed or family.seed".into()))
            }
            (None, None, _) => 0,
        };
        Ok(Some(FamilyConfig {
            kind: f.kind,
            amplitude: AmplitudeRule { scale: f.amplitude, power: f.power },
            frequency,
            seed,
        }))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            kind: self.experiment.kind,
            n_list: self.family.as_ref().map(|f| f.n_list.clone()).unwrap_or_else(default_n_list),
            windows: self.spectrum.window.list(),
            scan_step: self.spectrum.scan_step,
            tol: self.spectrum.tol,
            z_probe: complex(self.resolvent.z_probe),
            z_solution: complex(self.experiment.z_solution),
        }
    }

    pub fn z_probe(&self) -> Complex64 {
        complex(self.resolvent.z_probe)
    }

    pub fn solve_setup(&self) -> (Complex64, Endpoint, (Complex64, Complex64)) {
        let s = &self.solve;
        let start = match s.start {
            Start::Left => Endpoint::Left,
            Start::Right => Endpoint::Right,
        };
        (complex(s.z), start, (complex(s.data[0]), complex(s.data[1])))
    }
}

/// Expressions are sampled at cell midpoints.
fn sample(part: GridPartition, c: &Coefficient, path: &str) -> Result<Vec<f64>, CliError> {
    let n = part.n_cells();
    match c {
        Coefficient::Number(v) => {
            finite(path, &[*v])?;
            Ok(vec![*v; n])
        }
        Coefficient::Samples(v) => {
            if v.len() != n {
                return Err(invalid(path, format!("expected {n} samples, got {}", v.len())));
            }
            finite(path, v)?;
            Ok(v.clone())
        }
        Coefficient::Expr(text) => {
            let e = parse_expression(text).map_err(|e| invalid(path, e))?;
            (0..n).map(|j| e.eval(part.midpoint(j)).map_err(|e| invalid(path, e))).collect()
        }
    }
}
