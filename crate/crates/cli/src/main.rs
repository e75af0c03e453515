//! `gis`: batch front end for spectral, resolvent and convergence experiments
//! on generalized indefinite strings.

mod config;
mod expr;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gis_core::coeff::sampled_u;
use gis_core::convergence::{make_family, run_experiment, Metric};
use gis_core::propagator::propagate;
use gis_core::relation_gap::lemma_suite;
use gis_core::resolvent::{operator_norm, resolvent_matrix};
use gis_core::spectral::find_eigenvalues;
use gis_core::GisError;

use crate::config::{Config, Format};
use crate::output::{emit, write_json, Cell, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("output: {0}")]
    Io(String),
    /// Ran to completion but a reported check failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Numeric(_) => 3,
            Self::Validation(_) | Self::Io(_) | Self::Failed(_) => 1,
        }
    }
}

impl From<GisError> for CliError {
    fn from(e: GisError) -> Self {
        if e.is_numeric() {
            Self::Numeric(e.to_string())
        } else {
            Self::Validation(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "gis", version, about = "Spectra, resolvents and convergence experiments for generalized indefinite strings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file
    config: Option<PathBuf>,
    #[arg(long = "config", value_name = "PATH", conflicts_with = "config")]
    config_flag: Option<PathBuf>,
    /// Overrides output.format
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides output.path
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues in the configured window(s)
    Spectrum(ConfigArgs),
    /// Node values of one solution at solve.z
    Solve(ConfigArgs),
    /// Operator norm of the resolvent at resolvent.z_probe
    ResolventNorm(ConfigArgs),
    /// Convergence experiment over the configured family
    Converge {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Randomized checks of the gap-metric perturbation bounds
    GapSelftest {
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Hypothesis report for the configured family
    Validate {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Loaded {
    cfg: Config,
    format: Format,
    path: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Loaded, CliError> {
        let path = self
            .config
            .as_ref()
            .or(self.config_flag.as_ref())
            .ok_or_else(|| CliError::Usage("a config file is required".into()))?;
        let cfg = config::load(path)?;
        let format = self.format.unwrap_or(cfg.output.format);
        let path = self.output.clone().or_else(|| cfg.output.path.clone());
        Ok(Loaded { cfg, format, path })
    }
}

fn spectrum(args: &ConfigArgs) -> Result<(), CliError> {
    let l = args.load()?;
    let spec = l.cfg.string_spec()?;
    let s = &l.cfg.spectrum;
    let mut rows = Vec::new();
    for window in s.window.list() {
        let found = find_eigenvalues(&spec, window, s.scan_step, s.tol)?;
        for (z, r) in found.eigenvalues.iter().zip(&found.residuals) {
            rows.push((*z, *r));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let table = Table {
        columns: vec!["index", "z", "residual"],
        rows: rows.iter().enumerate().map(|(i, (z, r))| vec![(i + 1).into(), (*z).into(), (*r).into()]).collect(),
    };
    emit(&table, l.format, l.path.as_deref())
}

fn solve(args: &ConfigArgs) -> Result<(), CliError> {
    let l = args.load()?;
    let spec = l.cfg.string_spec()?;
    let (z, start, data) = l.cfg.solve_setup();
    let path = propagate(&sampled_u(&spec, z), start, data)?;
    let slopes = path.slopes();
    let part = spec.partition();
    // f' is the right derivative at interior nodes and the left one at x = 1.
    let rows = (0..=part.n_cells())
        .map(|j| {
            let f = path.f()[j];
            let d = slopes[j.min(part.n_cells() - 1)];
            vec![part.node(j).into(), f.re.into(), f.im.into(), d.re.into(), d.im.into()]
        })
        .collect();
    let table = Table { columns: vec!["x", "Re f", "Im f", "Re f'", "Im f'"], rows };
    emit(&table, l.format, l.path.as_deref())
}

fn resolvent_norm(args: &ConfigArgs) -> Result<(), CliError> {
    let l = args.load()?;
    let spec = l.cfg.string_spec()?;
    let z = l.cfg.z_probe();
    let norm = operator_norm(&resolvent_matrix(&spec, z)?.matrix)?;
    let table = Table { columns: vec!["re_z", "im_z", "norm"], rows: vec![vec![z.re.into(), z.im.into(), norm.into()]] };
    emit(&table, l.format, l.path.as_deref())
}

fn family(l: &Loaded, seed: Option<u64>) -> Result<gis_core::convergence::PerturbationFamily, CliError> {
    let fc = l
        .cfg
        .family_config(seed)?
        .ok_or_else(|| CliError::Usage("this command needs a family section in the config".into()))?;
    let spec = l.cfg.string_spec()?;
    make_family(spec, fc).map_err(|e| CliError::Validation(format!("family: {e}")))
}

fn converge(args: &ConfigArgs, seed: Option<u64>) -> Result<(), CliError> {
    let l = args.load()?;
    let fam = family(&l, seed)?;
    let report = run_experiment(&fam, &l.cfg.experiment())?;
    for row in report.rows.iter().filter(|r| !r.valid) {
        eprintln!("row n = {} invalid: {}", row.n, row.error.as_deref().unwrap_or("unknown"));
    }
    match l.format {
        Format::Json => write_json(&report, l.path.as_deref()),
        Format::Csv => {
            let mut rows: Vec<Vec<Cell>> = report
                .rows
                .iter()
                .map(|r| {
                    let mut row: Vec<Cell> = vec![r.n.into()];
                    row.extend(Metric::ALL.iter().map(|&m| Cell::from(r.value(m))));
                    row
                })
                .collect();
            let mut slope_row: Vec<Cell> = vec!["slope".into()];
            slope_row.extend(Metric::ALL.iter().map(|&m| Cell::from(report.slope(m).map(|f| f.slope))));
            rows.push(slope_row);
            let table = Table {
                columns: vec!["n", "sup_f_gap", "deriv_gap", "resolvent_gap", "spectral_gap"],
                rows,
            };
            emit(&table, Format::Csv, l.path.as_deref())
        }
    }
}

fn gap_selftest(trials: usize, dim: usize, seed: u64, format: Format, path: Option<PathBuf>) -> Result<(), CliError> {
    let r = lemma_suite(seed, trials, dim).map_err(|e| CliError::Usage(e.to_string()))?;
    match format {
        Format::Json => write_json(&r, path.as_deref())?,
        Format::Csv => {
            let mut rows = Vec::new();
            for (name, c) in [("l4", r.l4), ("l5", r.l5), ("graph_bound", r.graph_bound), ("l6", r.l6)] {
                rows.push(vec![name.into(), c.checked.into(), c.violations.into(), c.min_margin.into()]);
            }
            rows.push(vec!["l6_not_decreasing".into(), trials.into(), r.l6_not_decreasing.into(), Cell::Float(None)]);
            rows.push(vec![
                "l7".into(),
                (trials - r.l7_skipped).into(),
                r.l7_not_monotone.into(),
                r.l7_min_threshold.into(),
            ]);
            rows.push(vec![
                "inverse".into(),
                trials.into(),
                usize::from(r.inverse_defect > 1e-10).into(),
                (-r.inverse_defect).into(),
            ]);
            let table = Table { columns: vec!["check", "checked", "violations", "min_margin"], rows };
            emit(&table, Format::Csv, path.as_deref())?;
        }
    }
    match r.total_violations() {
        0 => Ok(()),
        n => Err(CliError::Failed(format!("{n} violations"))),
    }
}

fn validate(args: &ConfigArgs, seed: Option<u64>) -> Result<(), CliError> {
    let l = args.load()?;
    let fam = family(&l, seed)?;
    let n_list = l.cfg.experiment().n_list;
    let report = gis_core::coeff::validate_sequence(&fam.sequence(&n_list)?)?;
    match l.format {
        Format::Json => write_json(&report, l.path.as_deref())?,
        Format::Csv => {
            let rows = report
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    vec![
                        r.n.into(),
                        r.l1_density_gap.into(),
                        r.sqrt_gap.into(),
                        r.antider_gap.into(),
                        r.max_density_gap.into(),
                        report.hyp0_ok[i].into(),
                        report.domination_ok[i].into(),
                    ]
                })
                .collect();
            let table = Table {
                columns: vec![
                    "n",
                    "l1_density_gap",
                    "sqrt_gap",
                    "antider_gap",
                    "max_density_gap",
                    "hyp0_ok",
                    "dominated",
                ],
                rows,
            };
            emit(&table, Format::Csv, l.path.as_deref())?;
        }
    }
    if report.all_ok() {
        Ok(())
    } else {
        Err(CliError::Failed("hypotheses not satisfied".into()))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Spectrum(a) => spectrum(&a),
        Command::Solve(a) => solve(&a),
        Command::ResolventNorm(a) => resolvent_norm(&a),
        Command::Converge { args, seed } => converge(&args, seed),
        Command::GapSelftest { trials, dim, seed, format, output } => gap_selftest(trials, dim, seed, format, output),
        Command::Validate { args, seed } => validate(&args, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gis: {e}");
            ExitCode::from(e.code())
        }
    }
}
