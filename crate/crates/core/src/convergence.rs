//! Perturbation families of strings and the three convergence experiments:
//! solutions at a fixed real `z`, resolvents at a non-real `z`, and the
//! one-sided semi-distance between windowed spectra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{sampled_u, validate_sequence, HypothesisReport, PiecewiseConst, SpecSequence, StringSpec};
use crate::propagator::{propagate, Endpoint, SolutionPath};
use crate::resolvent::{operator_norm, resolvent_matrix};
use crate::spectral::{find_eigenvalues, DEFAULT_SCAN_STEP, DEFAULT_TOL};
use crate::{GisError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `p_n = p (1 + a_n)`
    DensityShift,
    /// `p_n = p (1 + a_n sin(2π k_n x))`
    DensityWobble,
    /// `w_n = w + a_n sin(2π k_n x)`
    AntiderivativeWobble,
    /// `p_n = p + a_n ξ`, `w_n = w + a_n η` with a fixed seeded pattern `ξ, η ∈ [-1, 1]`.
    RandomBounded,
}

impl std::str::FromStr for FamilyKind {
    type Err = GisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density-shift" => Ok(Self::DensityShift),
            "density-wobble" => Ok(Self::DensityWobble),
            "antiderivative-wobble" => Ok(Self::AntiderivativeWobble),
            "random-bounded" => Ok(Self::RandomBounded),
            other => Err(GisError::InvalidFamily(format!("unknown family kind {other:?}"))),
        }
    }
}

/// `a_n = scale · n^(-power)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeRule {
    pub scale: f64,
    pub power: f64,
}

impl AmplitudeRule {
    pub fn harmonic() -> Self {
        Self { scale: 1.0, power: 1.0 }
    }

    pub fn at(&self, n: usize) -> f64 {
        self.scale * (n as f64).powf(-self.power)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyRule {
    Fixed(f64),
    /// `k_n = n`
    Linear,
}

impl FrequencyRule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Self::Fixed(k) => k,
            Self::Linear => n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub amplitude: AmplitudeRule,
    pub frequency: FrequencyRule,
    pub seed: u64,
}

impl FamilyConfig {
    pub fn new(kind: FamilyKind) -> Self {
        Self { kind, amplitude: AmplitudeRule::harmonic(), frequency: FrequencyRule::Linear, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    config: FamilyConfig,
    base: StringSpec,
    dominator: PiecewiseConst<f64>,
    pattern: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn make_family(base: StringSpec, config: FamilyConfig) -> Result<PerturbationFamily> {
    let AmplitudeRule { scale, power } = config.amplitude;
    if !(scale.is_finite() && power.is_finite()) {
        return Err(GisError::InvalidFamily("amplitude rule not finite".into()));
    }
    if power < 0.0 {
        return Err(GisError::InvalidFamily("amplitude must not grow with n".into()));
    }
    if let FrequencyRule::Fixed(k) = config.frequency {
        if !k.is_finite() {
            return Err(GisError::InvalidFamily("frequency not finite".into()));
        }
    }
    // |a_n| ≤ |a_1| for every n ≥ 1.
    let a1 = scale.abs();
    let p = base.p();
    let min_p = p.values().iter().copied().fold(f64::INFINITY, f64::min);
    let part = base.partition();

    let (dominator, pattern) = match config.kind {
        FamilyKind::DensityShift => {
            if scale <= -1.0 {
                return Err(GisError::InvalidFamily(format!(
                    "density-shift amplitude {scale} makes the density non-positive"
                )));
            }
            (p.map(|v| v * (1.0 + a1))?, None)
        }
        FamilyKind::DensityWobble => {
            if a1 > 0.5 {
                return Err(GisError::InvalidFamily(format!(
                    "density-wobble amplitude {a1} exceeds 1/2"
                )));
            }
            (p.map(|v| v * (1.0 + a1))?, None)
        }
        FamilyKind::AntiderivativeWobble => (p.map(|v| v + a1)?, None),
        FamilyKind::RandomBounded => {
            if a1 >= min_p {
                return Err(GisError::InvalidFamily(format!(
                    "random-bounded amplitude {a1} not below the minimum density {min_p}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let n = part.n_cells();
            let xi = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let eta = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            (p.map(|v| v + a1)?, Some((xi, eta)))
        }
    };
    Ok(PerturbationFamily { config, base, dominator, pattern })
}

impl PerturbationFamily {
    pub fn config(&self) -> &FamilyConfig {
        &self.config
    }

    pub fn base(&self) -> &StringSpec {
        &self.base
    }

    pub fn dominator(&self) -> &PiecewiseConst<f64> {
        &self.dominator
    }

    /// Replaces the dominator, e.g. to exercise the hypothesis gate.
    pub fn with_dominator(mut self, g: PiecewiseConst<f64>) -> Result<Self> {
        self.base.partition().ensure_same(&g.partition(), "dominator")?;
        self.dominator = g;
        Ok(self)
    }

    pub fn member(&self, n: usize) -> Result<StringSpec> {
        if n == 0 {
            return Err(GisError::InvalidFamily("members are indexed from n = 1".into()));
        }
        let part = self.base.partition();
        let a = self.config.amplitude.at(n);
        let k = self.config.frequency.at(n);
        let wave = |j: usize| (2.0 * std::f64::consts::PI * k * part.midpoint(j)).sin();
        let p = self.base.p().values();
        let w = self.base.w().values();

        let (wn, pn): (Vec<f64>, Vec<f64>) = match self.config.kind {
            FamilyKind::DensityShift => (w.to_vec(), p.iter().map(|v| v * (1.0 + a)).collect()),
            FamilyKind::DensityWobble => {
                (w.to_vec(), p.iter().enumerate().map(|(j, v)| v * (1.0 + a * wave(j))).collect())
            }
            FamilyKind::AntiderivativeWobble => {
                (w.iter().enumerate().map(|(j, v)| v + a * wave(j)).collect(), p.to_vec())
            }
            FamilyKind::RandomBounded => {
                let (xi, eta) = self.pattern.as_ref().expect("pattern drawn at construction");
                (
                    w.iter().zip(eta).map(|(v, e)| v + a * e).collect(),
                    p.iter().zip(xi).map(|(v, x)| v + a * x).collect(),
                )
            }
        };
        StringSpec::new(PiecewiseConst::new(part, wn)?, PiecewiseConst::new(part, pn)?)
            .map_err(|e| GisError::InvalidFamily(format!("member {n}: {e}")))
    }

    pub fn sequence(&self, n_list: &[usize]) -> Result<SpecSequence> {
        let members = n_list.iter().map(|&n| Ok((n, self.member(n)?))).collect::<Result<_>>()?;
        SpecSequence::new(self.base.clone(), members, self.dominator.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solution,
    Resolvent,
    Spectrum,
    All,
}

impl ExperimentKind {
    fn solution(self) -> bool {
        matches!(self, Self::Solution | Self::All)
    }

    fn resolvent(self) -> bool {
        matches!(self, Self::Resolvent | Self::All)
    }

    fn spectrum(self) -> bool {
        matches!(self, Self::Spectrum | Self::All)
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = GisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solution" => Ok(Self::Solution),
            "resolvent" => Ok(Self::Resolvent),
            "spectrum" => Ok(Self::Spectrum),
            "all" => Ok(Self::All),
            other => Err(GisError::InvalidInput(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n_list: Vec<usize>,
    /// One window, or two for spectra on both sides of 0.
    pub windows: Vec<(f64, f64)>,
    pub scan_step: f64,
    pub tol: f64,
    pub z_probe: Complex64,
    pub z_solution: Complex64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::All,
            n_list: vec![4, 8, 16, 32, 64],
            windows: vec![(0.1, 10.0)],
            scan_step: DEFAULT_SCAN_STEP,
            tol: DEFAULT_TOL,
            z_probe: Complex64::i(),
            z_solution: Complex64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SupFGap,
    DerivGap,
    ResolventGap,
    SpectralGap,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::SupFGap, Metric::DerivGap, Metric::ResolventGap, Metric::SpectralGap];

    pub fn name(self) -> &'static str {
        match self {
            Self::SupFGap => "sup_f_gap",
            Self::DerivGap => "deriv_gap",
            Self::ResolventGap => "resolvent_gap",
            Self::SpectralGap => "spectral_gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub amplitude: f64,
    pub valid: bool,
    pub error: Option<String>,
    /// `max_x |f_n - f|` over nodes
    pub sup_f_gap: Option<f64>,
    /// `∫ |f_n' - f'|²`
    pub deriv_gap: Option<f64>,
    pub resolvent_gap: Option<f64>,
    /// `sup_{λ ∈ σ_n} dist(λ, σ)`
    pub spectral_gap: Option<f64>,
    /// `sup_{μ ∈ σ} dist(μ, σ_n)`, diagnostic only.
    pub spectral_gap_reverse: Option<f64>,
}

impl ConvergenceRow {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::SupFGap => self.sup_f_gap,
            Metric::DerivGap => self.deriv_gap,
            Metric::ResolventGap => self.resolvent_gap,
            Metric::SpectralGap => self.spectral_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEntry {
    pub metric: Metric,
    pub fit: Option<RateFit>,
    /// Why no slope is available.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub family: FamilyKind,
    pub kind: ExperimentKind,
    pub hypotheses: HypothesisReport,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<SlopeEntry>,
}

impl ConvergenceReport {
    pub fn column(&self, metric: Metric) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.value(metric)).collect()
    }

    pub fn slope(&self, metric: Metric) -> Option<RateFit> {
        self.slopes.iter().find(|s| s.metric == metric).and_then(|s| s.fit)
    }
}

/// Least-squares slope of `log value` against `log n` over valid rows with
/// positive values.
pub fn fit_rate(rows: &[ConvergenceRow], metric: Metric) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| r.value(metric).filter(|&v| v > 0.0 && v.is_finite()).map(|v| ((r.n as f64).ln(), v.ln())))
        .collect();
    if pts.len() < 3 {
        return Err(GisError::InsufficientData(format!(
            "{} needs at least 3 positive rows, found {}",
            metric.name(),
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(GisError::InsufficientData(format!("{} rows share a single n", metric.name())));
    }
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit { slope, intercept, residual: (ss / m).sqrt(), points: pts.len() })
}

/// One-sided `sup_{λ ∈ from} dist(λ, to)`; 0 when `from` is empty.
pub fn semi_distance(from: &[f64], to: &[f64]) -> Option<f64> {
    if from.is_empty() {
        return Some(0.0);
    }
    if to.is_empty() {
        return None;
    }
    Some(
        from.iter()
            .map(|l| to.iter().map(|m| (l - m).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max),
    )
}

struct Baseline {
    path: Option<SolutionPath>,
    resolvent: Option<DMatrix<Complex64>>,
    eigenvalues: Option<Vec<f64>>,
}

fn solve_left(spec: &StringSpec, z: Complex64) -> Result<SolutionPath> {
    propagate(&sampled_u(spec, z), Endpoint::Left, (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)))
}

/// Eigenvalues over all windows; with `trim`, those within one scan step of a
/// window edge are dropped.
fn windowed_spectrum(spec: &StringSpec, cfg: &ExperimentConfig, trim: bool) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &(lo, hi) in &cfg.windows {
        let s = find_eigenvalues(spec, (lo, hi), cfg.scan_step, cfg.tol)?;
        out.extend(
            s.eigenvalues
                .into_iter()
                .filter(|&l| !trim || (l - lo > cfg.scan_step && hi - l > cfg.scan_step)),
        );
    }
    Ok(out)
}

fn check_config(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
        return Err(GisError::InvalidInput("n_list must hold positive indices".into()));
    }
    if cfg.kind.resolvent() && cfg.z_probe.im == 0.0 {
        return Err(GisError::InvalidInput("z_probe must be non-real".into()));
    }
    if cfg.kind.spectrum() {
        if cfg.windows.is_empty() || cfg.windows.len() > 2 {
            return Err(GisError::InvalidInput("one or two spectral windows expected".into()));
        }
        for &(lo, hi) in &cfg.windows {
            if !(lo < hi) || (lo <= 0.0 && hi >= 0.0) {
                return Err(GisError::InvalidInput(format!(
                    "window [{lo}, {hi}] must exclude a neighbourhood of 0"
                )));
            }
        }
    }
    Ok(())
}

/// Runs the selected experiments for every `n` in `cfg.n_list`. Families that
/// fail the positivity or domination hypotheses are refused; failures of a
/// single member mark that row invalid.
pub fn run_experiment(family: &PerturbationFamily, cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    check_config(cfg)?;
    let mut n_list = cfg.n_list.clone();
    n_list.sort_unstable();
    n_list.dedup();

    let seq = family.sequence(&n_list)?;
    let hypotheses = validate_sequence(&seq)?;
    if !hypotheses.all_ok() {
        let bad: Vec<usize> = hypotheses
            .rows
            .iter()
            .zip(hypotheses.hyp0_ok.iter().zip(&hypotheses.domination_ok))
            .filter(|(_, (a, b))| !(**a && **b))
            .map(|(r, _)| r.n)
            .collect();
        return Err(GisError::HypothesisViolated(format!(
            "members {bad:?} fail positivity or domination by the family dominator"
        )));
    }

    let base = family.base();
    let baseline = Baseline {
        path: cfg.kind.solution().then(|| solve_left(base, cfg.z_solution)).transpose()?,
        resolvent: cfg.kind.resolvent().then(|| resolvent_matrix(base, cfg.z_probe).map(|m| m.matrix)).transpose()?,
        eigenvalues: cfg.kind.spectrum().then(|| windowed_spectrum(base, cfg, false)).transpose()?,
    };

    let rows: Vec<ConvergenceRow> = seq
        .members()
        .par_iter()
        .map(|(n, member)| {
            let mut row = ConvergenceRow {
                n: *n,
                amplitude: family.config.amplitude.at(*n),
                valid: true,
                error: None,
                sup_f_gap: None,
                deriv_gap: None,
                resolvent_gap: None,
                spectral_gap: None,
                spectral_gap_reverse: None,
            };
            if let Err(e) = measure_row(member, cfg, &baseline, &mut row) {
                row.valid = false;
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();

    let slopes = Metric::ALL
        .iter()
        .filter(|m| match m {
            Metric::SupFGap | Metric::DerivGap => cfg.kind.solution(),
            Metric::ResolventGap => cfg.kind.resolvent(),
            Metric::SpectralGap => cfg.kind.spectrum(),
        })
        .map(|&metric| match fit_rate(&rows, metric) {
            Ok(fit) => SlopeEntry { metric, fit: Some(fit), reason: None },
            Err(e) => SlopeEntry { metric, fit: None, reason: Some(e.to_string()) },
        })
        .collect();

    Ok(ConvergenceReport { family: family.config.kind, kind: cfg.kind, hypotheses, rows, slopes })
}

fn measure_row(member: &StringSpec, cfg: &ExperimentConfig, base: &Baseline, row: &mut ConvergenceRow) -> Result<()> {
    if let Some(path) = &base.path {
        let mp = solve_left(member, cfg.z_solution)?;
        row.sup_f_gap = Some(mp.f().iter().zip(path.f()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        let h = path.partition().width();
        row.deriv_gap = Some(
            mp.slopes().iter().zip(path.slopes()).map(|(a, b)| (a - b).norm_sqr() * h).sum(),
        );
    }
    if let Some(r) = &base.resolvent {
        let m = resolvent_matrix(member, cfg.z_probe)?;
        row.resolvent_gap = Some(operator_norm(&(m.matrix - r))?);
    }
    if let Some(sigma) = &base.eigenvalues {
        let sigma_n = windowed_spectrum(member, cfg, true)?;
        row.spectral_gap = Some(semi_distance(&sigma_n, sigma).ok_or_else(|| {
            GisError::InsufficientData("base spectrum empty in window".into())
        })?);
        row.spectral_gap_reverse = semi_distance(sigma, &sigma_n);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dirichlet(n: usize) -> StringSpec {
        StringSpec::uniform(n, 1.0).unwrap()
    }

    fn rows_from(values: &[(usize, f64)]) -> Vec<ConvergenceRow> {
        values
            .iter()
            .map(|&(n, v)| ConvergenceRow {
                n,
                amplitude: 0.0,
                valid: true,
                error: None,
                sup_f_gap: Some(v),
                deriv_gap: None,
                resolvent_gap: None,
                spectral_gap: None,
                spectral_gap_reverse: None,
            })
            .collect()
    }

    #[test]
    fn density_shift_members() {
        let fam = make_family(dirichlet(64), FamilyConfig::new(FamilyKind::DensityShift)).unwrap();
        assert!(fam.dominator().values().iter().all(|&g| g == 2.0));
        for n in [1usize, 3, 10] {
            let m = fam.member(n).unwrap();
            assert!(m.p().values().iter().all(|&v| v == 1.0 + 1.0 / n as f64));
        }
    }

    #[test]
    fn antiderivative_wobble_gap() {
        let fam = make_family(dirichlet(4096), FamilyConfig::new(FamilyKind::AntiderivativeWobble)).unwrap();
        let report = validate_sequence(&fam.sequence(&[4, 8, 16]).unwrap()).unwrap();
        for row in &report.rows {
            let n = row.n as f64;
            assert!((row.antider_gap - 0.5 / (n * n)).abs() <= 1e-6);
        }
        assert!(report.rows.windows(2).all(|w| w[1].antider_gap <= w[0].antider_gap));
    }

    #[test]
    fn invalid_families() {
        let mut cfg = FamilyConfig::new(FamilyKind::DensityWobble);
        cfg.amplitude.scale = 0.8;
        assert!(matches!(make_family(dirichlet(32), cfg), Err(GisError::InvalidFamily(_))));
        let mut cfg = FamilyConfig::new(FamilyKind::DensityShift);
        cfg.amplitude.scale = -1.5;
        assert!(make_family(dirichlet(32), cfg).is_err());
        let mut cfg = FamilyConfig::new(FamilyKind::RandomBounded);
        cfg.amplitude.scale = 1.0;
        assert!(make_family(dirichlet(32), cfg).is_err());
        let mut cfg = FamilyConfig::new(FamilyKind::DensityShift);
        cfg.amplitude.power = -1.0;
        assert!(make_family(dirichlet(32), cfg).is_err());
    }

    #[test]
    fn random_bounded_is_seeded() {
        let mut cfg = FamilyConfig::new(FamilyKind::RandomBounded);
        cfg.amplitude.scale = 0.5;
        cfg.seed = 9;
        let a = make_family(dirichlet(32), cfg).unwrap().member(3).unwrap();
        let b = make_family(dirichlet(32), cfg).unwrap().member(3).unwrap();
        assert_eq!(a.p().values(), b.p().values());
        assert!(a.p().values().iter().all(|v| (v - 1.0).abs() <= 0.5 / 3.0));
    }

    #[test]
    fn fit_exact_power_laws() {
        let ns = [4usize, 8, 16, 32, 64];
        let f1 = fit_rate(&rows_from(&ns.map(|n| (n, 3.0 / n as f64))), Metric::SupFGap).unwrap();
        assert!((f1.slope + 1.0).abs() <= 1e-8);
        let f2 = fit_rate(&rows_from(&ns.map(|n| (n, 0.5 / (n * n) as f64))), Metric::SupFGap).unwrap();
        assert!((f2.slope + 2.0).abs() <= 1e-8);
        assert!(f2.residual <= 1e-10);
        let few = rows_from(&[(4, 1.0), (8, 0.5), (16, 0.0)]);
        assert!(matches!(fit_rate(&few, Metric::SupFGap), Err(GisError::InsufficientData(_))));
    }

    #[test]
    fn semi_distance_is_one_sided() {
        assert_eq!(semi_distance(&[1.0, 2.0], &[1.0, 2.0, 5.0]), Some(0.0));
        assert_eq!(semi_distance(&[1.0, 2.0, 5.0], &[1.0, 2.0]), Some(3.0));
        assert_eq!(semi_distance(&[], &[1.0]), Some(0.0));
        assert_eq!(semi_distance(&[1.0], &[]), None);
    }

    #[test]
    fn identity_family_is_exactly_zero() {
        let mut cfg = FamilyConfig::new(FamilyKind::DensityWobble);
        cfg.amplitude.scale = 0.0;
        let fam = make_family(dirichlet(64), cfg).unwrap();
        let exp = ExperimentConfig { n_list: vec![4, 8, 16], ..Default::default() };
        let report = run_experiment(&fam, &exp).unwrap();
        for row in &report.rows {
            assert!(row.valid);
            for m in Metric::ALL {
                assert_eq!(row.value(m), Some(0.0), "{m:?}");
            }
        }
        assert!(report.slopes.iter().all(|s| s.fit.is_none() && s.reason.is_some()));
    }

    #[test]
    fn hypothesis_gate_refuses_undominated_family() {
        let base = dirichlet(64);
        let fam = make_family(base.clone(), FamilyConfig::new(FamilyKind::DensityShift))
            .unwrap()
            .with_dominator(base.p().clone())
            .unwrap();
        let exp = ExperimentConfig { n_list: vec![4, 8], ..Default::default() };
        assert!(matches!(run_experiment(&fam, &exp), Err(GisError::HypothesisViolated(_))));
    }

    #[test]
    fn density_shift_spectral_gap_closed_form() {
        let fam = make_family(dirichlet(1024), FamilyConfig::new(FamilyKind::DensityShift)).unwrap();
        let exp = ExperimentConfig { kind: ExperimentKind::Spectrum, ..Default::default() };
        let report = run_experiment(&fam, &exp).unwrap();
        for row in &report.rows {
            let n = row.n as f64;
            let expect = 3.0 * PI * (1.0 - (1.0 + 1.0 / n).powf(-0.5));
            assert!((row.spectral_gap.unwrap() - expect).abs() <= 1e-3);
        }
        let slope = report.slope(Metric::SpectralGap).unwrap().slope;
        assert!((-1.1..=-0.9).contains(&slope), "{slope}");
    }

    #[test]
    fn row_failure_is_recorded() {
        // π lies outside the window; only the n = 16 member has an eigenvalue inside.
        let fam = make_family(dirichlet(256), FamilyConfig::new(FamilyKind::DensityShift)).unwrap();
        let exp = ExperimentConfig {
            kind: ExperimentKind::Spectrum,
            n_list: vec![4, 16],
            windows: vec![(3.0, 3.13)],
            ..Default::default()
        };
        let report = run_experiment(&fam, &exp).unwrap();
        assert!(report.rows[0].valid);
        assert_eq!(report.rows[0].spectral_gap, Some(0.0));
        assert!(!report.rows[1].valid);
        assert!(report.rows[1].error.as_deref().unwrap().contains("empty"));
    }

    #[test]
    fn rows_sorted_and_non_negative() {
        let fam = make_family(dirichlet(128), FamilyConfig::new(FamilyKind::AntiderivativeWobble)).unwrap();
        let exp = ExperimentConfig { kind: ExperimentKind::Solution, n_list: vec![16, 4, 8], ..Default::default() };
        let report = run_experiment(&fam, &exp).unwrap();
        let ns: Vec<usize> = report.rows.iter().map(|r| r.n).collect();
        assert_eq!(ns, vec![4, 8, 16]);
        assert!(report.rows.iter().all(|r| r.sup_f_gap.unwrap() >= 0.0 && r.deriv_gap.unwrap() >= 0.0));
    }
}
