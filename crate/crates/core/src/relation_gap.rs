//! Linear relations in `C^d × C^d`, the gap metric between them, and a
//! randomized battery for the perturbation lemmas on relations.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::resolvent::operator_norm;
use crate::{GisError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Columns whose norm falls below this fraction of their input norm after
/// projection are treated as dependent.
const RANK_TOL: f64 = 1e-10;
/// Slack before a lemma margin counts as a violation.
pub const VIOLATION_SLACK: f64 = 1e-8;

/// A subspace of `C^{2d}` given by orthonormal columns; rows `0..d` hold `f`,
/// rows `d..2d` hold `g` for pairs `(f, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRelation {
    dim: usize,
    basis: DMatrix<Complex64>,
}

impl FiniteRelation {
    /// Span of the given columns (any rank, including 0).
    pub fn span(dim: usize, vectors: &DMatrix<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(GisError::InvalidInput("ambient dimension must be positive".into()));
        }
        if vectors.nrows() != 2 * dim {
            return Err(GisError::Mismatch(format!(
                "vectors have {} rows, expected {}",
                vectors.nrows(),
                2 * dim
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(GisError::InvalidInput("non-finite relation vector".into()));
        }
        Ok(Self { dim, basis: orthonormalize(vectors) })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::span(dim, &DMatrix::zeros(2 * dim, 0))
    }

    /// `{(f, M f)}`.
    pub fn graph(m: &DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(GisError::Mismatch("graph of a non-square matrix".into()));
        }
        let d = m.nrows();
        let mut v = DMatrix::zeros(2 * d, d);
        v.view_mut((0, 0), (d, d)).fill_with_identity();
        v.view_mut((d, 0), (d, d)).copy_from(m);
        Self::span(d, &v)
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<Complex64> {
        &self.basis
    }

    /// `dim T(0)`, the multi-valued part.
    pub fn multivalued_dim(&self) -> usize {
        if self.rank() == 0 {
            return 0;
        }
        let top = self.basis.rows(0, self.dim).clone_owned();
        let sv = top.svd(false, false).singular_values;
        self.rank() - sv.iter().filter(|&&s| s > 1e-10).count()
    }

    /// Largest deviation of `BᴴB` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.basis.adjoint() * &self.basis;
        let id = DMatrix::<Complex64>::identity(self.rank(), self.rank());
        (gram - id).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Gram-Schmidt with one reorthogonalization pass; dependent columns are dropped.
fn orthonormalize(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(v.ncols());
    for j in 0..v.ncols() {
        let mut x = v.column(j).clone_owned();
        let start = x.norm();
        if start == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &cols {
                let c = q.dotc(&x);
                x -= q * c;
            }
        }
        let n = x.norm();
        if n > RANK_TOL * start {
            cols.push(x / Complex64::new(n, 0.0));
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(v.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// A single-valued everywhere-defined operator on `C^d`.
#[derive(Debug, Clone)]
pub struct BoundedOp {
    matrix: DMatrix<Complex64>,
    norm: f64,
}

impl BoundedOp {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GisError::Mismatch("operator must be square".into()));
        }
        let norm = operator_norm(&matrix)?;
        Ok(Self { matrix, norm })
    }

    pub fn scalar(dim: usize, c: Complex64) -> Self {
        Self { matrix: DMatrix::from_diagonal_element(dim, dim, c), norm: c.norm() }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone)]
pub enum Transform<'a> {
    /// `T + A = {(f, g + A f)}`
    Add(&'a BoundedOp),
    /// `T - z`
    Shift(Complex64),
    /// `T⁻¹ = {(g, f)}`
    Inverse,
}

pub fn transform(t: &FiniteRelation, kind: Transform<'_>) -> Result<FiniteRelation> {
    let d = t.dim;
    let b = &t.basis;
    let mut v = DMatrix::zeros(2 * d, b.ncols());
    match kind {
        Transform::Add(a) => {
            if a.dim() != d {
                return Err(GisError::Mismatch(format!(
                    "operator of dimension {} on relation of dimension {d}",
                    a.dim()
                )));
            }
            let f = b.rows(0, d);
            let g = b.rows(d, d) + a.matrix() * f;
            v.rows_mut(0, d).copy_from(&f);
            v.rows_mut(d, d).copy_from(&g);
        }
        Transform::Shift(z) => {
            let f = b.rows(0, d);
            let g = b.rows(d, d) - f * z;
            v.rows_mut(0, d).copy_from(&f);
            v.rows_mut(d, d).copy_from(&g);
        }
        Transform::Inverse => {
            v.rows_mut(0, d).copy_from(&b.rows(d, d));
            v.rows_mut(d, d).copy_from(&b.rows(0, d));
        }
    }
    FiniteRelation::span(d, &v)
}

/// `δ(S, T) = ‖(I - P_T) P_S‖`, the sine of the largest principal angle from `S` to `T`.
pub fn directed_gap(s: &FiniteRelation, t: &FiniteRelation) -> Result<f64> {
    if s.dim != t.dim {
        return Err(GisError::Mismatch(format!(
            "relations live in dimensions {} and {}",
            s.dim, t.dim
        )));
    }
    if s.rank() == 0 || t.rank() == 0 {
        return Ok(0.0);
    }
    if s.basis == t.basis {
        return Ok(0.0);
    }
    let residual = &s.basis - &t.basis * (t.basis.adjoint() * &s.basis);
    let sigma = residual.svd(false, false).singular_values.max();
    Ok(sigma.clamp(0.0, 1.0))
}

/// `δ̂(S, T) = max(δ(S, T), δ(T, S))`.
pub fn gap(s: &FiniteRelation, t: &FiniteRelation) -> Result<f64> {
    Ok(directed_gap(s, t)?.max(directed_gap(t, s)?))
}

/// Running minimum of `bound - value` over many checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `bound - value` seen; negative means the bound failed.
    pub min_margin: f64,
}

impl LemmaCheck {
    fn empty() -> Self {
        Self { checked: 0, violations: 0, min_margin: f64::INFINITY }
    }

    fn record(&mut self, margin: f64) {
        self.checked += 1;
        if margin < -VIOLATION_SLACK || margin.is_nan() {
            self.violations += 1;
        }
        self.min_margin = self.min_margin.min(margin);
    }

    fn merge(mut self, other: Self) -> Self {
        self.checked += other.checked;
        self.violations += other.violations;
        self.min_margin = self.min_margin.min(other.min_margin);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSuiteReport {
    pub seed: u64,
    pub trials: usize,
    pub dim: usize,
    /// `2(1 + ‖A‖²) δ̂(S, T) - δ̂(S + A, T + A)`
    pub l4: LemmaCheck,
    /// `‖A‖ - δ̂(T + A, T)`
    pub l5: LemmaCheck,
    /// `‖M - M'‖ - δ̂(graph M, graph M')`
    pub graph_bound: LemmaCheck,
    /// `2(1 + |z|²) ‖R_n - R‖ - δ̂(graph(M + E_n), graph M)` along `‖E_n‖ → 0`.
    pub l6: LemmaCheck,
    /// Trials whose resolvent differences or gaps failed to decrease along the sequence.
    pub l6_not_decreasing: usize,
    /// Smallest empirical gap at which a perturbation first brought an
    /// eigenvalue into the test disk.
    pub l7_min_threshold: f64,
    /// Trials where the gap failed to grow with the perturbation size below the threshold.
    pub l7_not_monotone: usize,
    /// Trials where no perturbation within the scan reached the test disk.
    pub l7_skipped: usize,
    /// Largest `|δ̂(S⁻¹, T⁻¹) - δ̂(S, T)|`.
    pub inverse_defect: f64,
    /// Trials that drew a relation with a nontrivial multi-valued part.
    pub multivalued_samples: usize,
}

impl LemmaSuiteReport {
    pub fn total_violations(&self) -> usize {
        self.l4.violations
            + self.l5.violations
            + self.graph_bound.violations
            + self.l6.violations
            + self.l6_not_decreasing
            + self.l7_not_monotone
            + usize::from(self.l7_min_threshold <= 0.0)
            + usize::from(self.inverse_defect > 1e-10)
    }
}

#[derive(Debug, Clone)]
struct TrialOutcome {
    l4: LemmaCheck,
    l5: LemmaCheck,
    graph_bound: LemmaCheck,
    l6: LemmaCheck,
    l6_not_decreasing: usize,
    l7_threshold: Option<f64>,
    l7_not_monotone: usize,
    inverse_defect: f64,
    multivalued: bool,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random relation of rank in `[1, 2d-1]`; with probability ¼ one column is
/// forced to be `(0, g)` so that the multi-valued part is nontrivial.
fn random_relation(rng: &mut ChaCha8Rng, d: usize) -> Result<FiniteRelation> {
    let rank = rng.random_range(1..2 * d);
    let mut v = gaussian_matrix(rng, 2 * d, rank);
    if rng.random_bool(0.25) {
        v.view_mut((0, 0), (d, 1)).fill(ZERO);
    }
    FiniteRelation::span(d, &v)
}

fn random_operator(rng: &mut ChaCha8Rng, d: usize) -> Result<BoundedOp> {
    let scale = rng.random_range(0.0..2.0) / (d as f64).sqrt();
    BoundedOp::new(gaussian_matrix(rng, d, d) * Complex64::new(scale, 0.0))
}

fn inverse_of(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| GisError::NonConvergence("shifted matrix not invertible".into()))
}

fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .and_then(|s| s.eigenvalues())
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| GisError::NonConvergence("Schur iteration did not converge".into()))
}

const L6_STEPS: usize = 6;
const L7_SCAN: usize = 32;
const L7_BISECT: usize = 40;

fn run_trial(seed: u64, trial: usize, d: usize) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);

    // l4, l5 and inverse invariance on general relations.
    let s = random_relation(&mut rng, d)?;
    let t = random_relation(&mut rng, d)?;
    let a = random_operator(&mut rng, d)?;
    let multivalued = s.multivalued_dim() > 0 || t.multivalued_dim() > 0;

    let gap_st = gap(&s, &t)?;
    let sa = transform(&s, Transform::Add(&a))?;
    let ta = transform(&t, Transform::Add(&a))?;
    let mut l4 = LemmaCheck::empty();
    l4.record(2.0 * (1.0 + a.norm() * a.norm()) * gap_st - gap(&sa, &ta)?);

    let mut l5 = LemmaCheck::empty();
    l5.record(a.norm() - gap(&ta, &t)?);
    l5.record(a.norm() - gap(&sa, &s)?);

    let s_inv = transform(&s, Transform::Inverse)?;
    let t_inv = transform(&t, Transform::Inverse)?;
    let inverse_defect = (gap(&s_inv, &t_inv)? - gap_st).abs();

    // Graphs of matrices.
    let m = gaussian_matrix(&mut rng, d, d) * Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let m2 = &m + gaussian_matrix(&mut rng, d, d) * Complex64::new(rng.random_range(0.0..1.0), 0.0);
    let mut graph_bound = LemmaCheck::empty();
    graph_bound.record(
        operator_norm(&(&m2 - &m))? - gap(&FiniteRelation::graph(&m)?, &FiniteRelation::graph(&m2)?)?,
    );

    // l6: E_n → 0 in norm, through the resolvent at a common point.
    let graph_m = FiniteRelation::graph(&m)?;
    let m_norm = operator_norm(&m)?;
    let z = Complex64::new(0.0, m_norm + 2.0);
    let id = DMatrix::<Complex64>::identity(d, d);
    let r = inverse_of(&(&m - &id * z))?;
    let e = gaussian_matrix(&mut rng, d, d);
    let e = &e * Complex64::new(1.0 / operator_norm(&e)?, 0.0);
    let mut l6 = LemmaCheck::empty();
    let mut prev = (f64::INFINITY, f64::INFINITY);
    let mut l6_not_decreasing = 0;
    for k in 0..L6_STEPS {
        let en = &e * Complex64::new(0.5f64.powi(k as i32), 0.0);
        let mn = &m + en;
        let rn = inverse_of(&(&mn - &id * z))?;
        let rdiff = operator_norm(&(rn - &r))?;
        let g = gap(&FiniteRelation::graph(&mn)?, &graph_m)?;
        l6.record(2.0 * (1.0 + z.norm_sqr()) * rdiff - g);
        if !(rdiff < prev.0 && g < prev.1) {
            l6_not_decreasing = 1;
        }
        prev = (rdiff, g);
    }

    // l7: a disk free of σ(M) stays free for nearby graphs.
    let (l7_threshold, l7_not_monotone) = l7_trial(&mut rng, &m, &graph_m)?;

    Ok(TrialOutcome {
        l4,
        l5,
        graph_bound,
        l6,
        l6_not_decreasing,
        l7_threshold,
        l7_not_monotone,
        inverse_defect,
        multivalued,
    })
}

/// Pushes `M` along `M + ε D` until an eigenvalue enters the disk, bisects the
/// first crossing, and returns the gap there. The gap must grow with `ε`
/// on the safe part of the path.
fn l7_trial(
    rng: &mut ChaCha8Rng,
    m: &DMatrix<Complex64>,
    graph_m: &FiniteRelation,
) -> Result<(Option<f64>, usize)> {
    let d = m.nrows();
    let spec = eigenvalues(m)?;
    let lambda0 = spec[rng.random_range(0..d)];
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let reach = 1.0 + operator_norm(m)?;
    let center = lambda0 + Complex64::from_polar(reach, angle);
    let dist = |ev: &[Complex64]| ev.iter().map(|l| (l - center).norm()).fold(f64::INFINITY, f64::min);
    let radius = 0.5 * dist(&spec);

    let e = gaussian_matrix(rng, d, d);
    let e = &e * Complex64::new(0.25 * reach / operator_norm(&e)?, 0.0);
    let dir = DMatrix::<Complex64>::identity(d, d) * (center - lambda0) + e;
    let member = |eps: f64| m + &dir * Complex64::new(eps, 0.0);
    let hits = |eps: f64| -> Result<bool> { Ok(dist(&eigenvalues(&member(eps))?) <= radius) };

    let eps_max = 2.0;
    let mut safe = Vec::new();
    let mut crossing = None;
    for k in 1..=L7_SCAN {
        let eps = eps_max * k as f64 / L7_SCAN as f64;
        if hits(eps)? {
            crossing = Some(eps);
            break;
        }
        safe.push(eps);
    }
    let Some(mut hi) = crossing else {
        return Ok((None, 0));
    };
    let mut lo = safe.last().copied().unwrap_or(0.0);
    for _ in 0..L7_BISECT {
        let mid = 0.5 * (lo + hi);
        if hits(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    safe.push(lo);
    let threshold = gap(&FiniteRelation::graph(&member(hi))?, graph_m)?;

    let mut not_monotone = 0;
    let mut last = 0.0;
    for &eps in &safe {
        let g = gap(&FiniteRelation::graph(&member(eps))?, graph_m)?;
        if g + 1e-12 < last || g > threshold + 1e-12 {
            not_monotone = 1;
        }
        last = g;
    }
    Ok((Some(threshold), not_monotone))
}

/// Runs `trials` independent seeded trials in dimension `d`. Trial `k` draws
/// from stream `k` of the seed, so the report does not depend on scheduling.
pub fn lemma_suite(seed: u64, trials: usize, d: usize) -> Result<LemmaSuiteReport> {
    if trials == 0 {
        return Err(GisError::InvalidInput("trials must be at least 1".into()));
    }
    if !(2..=64).contains(&d) {
        return Err(GisError::InvalidInput(format!("dimension {d} outside 2..=64")));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|k| run_trial(seed, k, d))
        .collect::<Result<_>>()?;

    let mut report = LemmaSuiteReport {
        seed,
        trials,
        dim: d,
        l4: LemmaCheck::empty(),
        l5: LemmaCheck::empty(),
        graph_bound: LemmaCheck::empty(),
        l6: LemmaCheck::empty(),
        l6_not_decreasing: 0,
        l7_min_threshold: f64::INFINITY,
        l7_not_monotone: 0,
        l7_skipped: 0,
        inverse_defect: 0.0,
        multivalued_samples: 0,
    };
    for o in outcomes {
        report.l4 = report.l4.merge(o.l4);
        report.l5 = report.l5.merge(o.l5);
        report.graph_bound = report.graph_bound.merge(o.graph_bound);
        report.l6 = report.l6.merge(o.l6);
        report.l6_not_decreasing += o.l6_not_decreasing;
        match o.l7_threshold {
            Some(t) => report.l7_min_threshold = report.l7_min_threshold.min(t),
            None => report.l7_skipped += 1,
        }
        report.l7_not_monotone += o.l7_not_monotone;
        report.inverse_defect = report.inverse_defect.max(o.inverse_defect);
        report.multivalued_samples += usize::from(o.multivalued);
    }
    Ok(report)
}
