//! Coefficients of a regular string on a uniform grid.
//!
//! `ω` enters only through its normalized anti-derivative `w` and `ν` through
//! its density `p`; both are piecewise constant on the cells of a
//! [`GridPartition`]. The anti-derivative `q` of `ν` is then piecewise linear
//! and is evaluated exactly.

use num_complex::Complex64;
use serde::Serialize;

use crate::propagator::SampledCoefficient;
use crate::{GisError, Result};

/// Uniform partition of `[0, 1)` into `n_cells` cells of width `1 / n_cells`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GridPartition {
    n_cells: usize,
}

impl GridPartition {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(GisError::InvalidGrid(format!(
                "n_cells must be at least 2, got {n_cells}"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn width(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_cells as f64
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n_cells as f64
    }

    /// Index of the cell containing `x`, for `x` in `[0, 1)`.
    pub fn cell_of(&self, x: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&x) {
            return Err(GisError::InvalidInput(format!(
                "evaluation point {x} outside [0, 1)"
            )));
        }
        Ok(((x * self.n_cells as f64) as usize).min(self.n_cells - 1))
    }

    pub(crate) fn ensure_same(&self, other: &GridPartition, what: &str) -> Result<()> {
        if self != other {
            return Err(GisError::Mismatch(format!(
                "{what}: partitions differ ({} vs {} cells)",
                self.n_cells, other.n_cells
            )));
        }
        Ok(())
    }
}

/// One value per cell of a partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseConst<T> {
    partition: GridPartition,
    values: Vec<T>,
}

pub trait FiniteScalar: Copy {
    fn is_finite_value(&self) -> bool;
}

impl FiniteScalar for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl FiniteScalar for Complex64 {
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<T: FiniteScalar> PiecewiseConst<T> {
    pub fn new(partition: GridPartition, values: Vec<T>) -> Result<Self> {
        if values.len() != partition.n_cells() {
            return Err(GisError::Mismatch(format!(
                "expected {} cell values, got {}",
                partition.n_cells(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(GisError::InvalidInput(format!("non-finite value in cell {j}")));
        }
        Ok(Self { partition, values })
    }

    pub fn from_fn(partition: GridPartition, f: impl Fn(f64) -> T) -> Result<Self> {
        let values = (0..partition.n_cells())
            .map(|j| f(partition.midpoint(j)))
            .collect();
        Self::new(partition, values)
    }

    pub fn constant(partition: GridPartition, value: T) -> Result<Self> {
        Self::new(partition, vec![value; partition.n_cells()])
    }

    pub fn partition(&self) -> GridPartition {
        self.partition
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> Result<T> {
        Ok(self.values[self.partition.cell_of(x)?])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.partition, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Piecewise-linear anti-derivative `q(x) = ∫_[0,x) p dt` of a positive density.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeDensity {
    partition: GridPartition,
    slopes: Vec<f64>,
    nodes: Vec<f64>,
}

impl CumulativeDensity {
    /// `q` at nodes `0..=n_cells`; the last entry is `q(1-)`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn total(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Exact value at the midpoint of cell `j`.
    pub fn at_midpoint(&self, j: usize) -> f64 {
        self.nodes[j] + 0.5 * self.slopes[j] * self.partition.width()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let j = self.partition.cell_of(x)?;
        Ok(self.nodes[j] + self.slopes[j] * (x - self.partition.node(j)))
    }
}

pub fn cumulative_density(p: &PiecewiseConst<f64>) -> Result<CumulativeDensity> {
    if let Some(j) = p.values().iter().position(|&v| v <= 0.0) {
        return Err(GisError::InvalidSpec(format!(
            "density must be positive, cell {j} has {}",
            p.values()[j]
        )));
    }
    let h = p.partition().width();
    let mut nodes = Vec::with_capacity(p.values().len() + 1);
    let mut acc = 0.0;
    nodes.push(acc);
    for &pj in p.values() {
        acc += pj * h;
        nodes.push(acc);
    }
    Ok(CumulativeDensity {
        partition: p.partition(),
        slopes: p.values().to_vec(),
        nodes,
    })
}

/// A regular string `(1, ω, ν)`: anti-derivative `w` of `ω`, density `p` of `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct StringSpec {
    w: PiecewiseConst<f64>,
    p: PiecewiseConst<f64>,
    q: CumulativeDensity,
}

impl StringSpec {
    /// Fails with `InvalidSpec` unless every density cell is strictly positive.
    pub fn new(w: PiecewiseConst<f64>, p: PiecewiseConst<f64>) -> Result<Self> {
        w.partition().ensure_same(&p.partition(), "w and p")?;
        let q = cumulative_density(&p)?;
        Ok(Self { w, p, q })
    }

    pub fn from_fns(
        partition: GridPartition,
        w: impl Fn(f64) -> f64,
        p: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        Self::new(
            PiecewiseConst::from_fn(partition, w)?,
            PiecewiseConst::from_fn(partition, p)?,
        )
    }

    /// `w ≡ 0`, `p ≡ density`.
    pub fn uniform(n_cells: usize, density: f64) -> Result<Self> {
        let partition = GridPartition::new(n_cells)?;
        Self::from_fns(partition, |_| 0.0, |_| density)
    }

    pub fn partition(&self) -> GridPartition {
        self.p.partition()
    }

    pub fn w(&self) -> &PiecewiseConst<f64> {
        &self.w
    }

    pub fn p(&self) -> &PiecewiseConst<f64> {
        &self.p
    }

    pub fn cumulative(&self) -> &CumulativeDensity {
        &self.q
    }

    /// `K = ν([0, 1))`.
    pub fn total_mass(&self) -> f64 {
        self.q.total()
    }
}

/// Midpoint samples `u_j = z w_j + z² q(m_j)` of the anti-derivative of `zω + z²ν`.
pub fn sampled_u(spec: &StringSpec, z: Complex64) -> SampledCoefficient {
    let z2 = z * z;
    let u_mid = spec
        .w
        .values()
        .iter()
        .enumerate()
        .map(|(j, &wj)| z * wj + z2 * spec.q.at_midpoint(j))
        .collect();
    SampledCoefficient::from_parts(spec.partition(), z, u_mid)
}

/// Outcome of the positivity/finiteness check on a density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hyp0Report {
    pub ok: bool,
    pub total_mass: f64,
    pub min_density: f64,
    pub nonpositive_cells: Vec<usize>,
}

/// Never fails: a density with non-positive cells is reported, not rejected.
pub fn validate_hyp0(p: &PiecewiseConst<f64>) -> Hyp0Report {
    let h = p.partition().width();
    let nonpositive_cells: Vec<usize> = p
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= 0.0)
        .map(|(j, _)| j)
        .collect();
    let total_mass: f64 = p.values().iter().map(|&v| v * h).sum();
    let min_density = p.values().iter().copied().fold(f64::INFINITY, f64::min);
    Hyp0Report {
        ok: nonpositive_cells.is_empty() && total_mass.is_finite(),
        total_mass,
        min_density,
        nonpositive_cells,
    }
}

/// A base string with an indexed family of perturbed strings and a common
/// dominator `g` for the perturbed densities.
#[derive(Debug, Clone)]
pub struct SpecSequence {
    base: StringSpec,
    members: Vec<(usize, StringSpec)>,
    dominator: PiecewiseConst<f64>,
}

impl SpecSequence {
    pub fn new(
        base: StringSpec,
        members: Vec<(usize, StringSpec)>,
        dominator: PiecewiseConst<f64>,
    ) -> Result<Self> {
        let part = base.partition();
        for (n, m) in &members {
            part.ensure_same(&m.partition(), &format!("member {n}"))?;
        }
        part.ensure_same(&dominator.partition(), "dominator")?;
        if let Some(j) = dominator.values().iter().position(|&g| g < 0.0) {
            return Err(GisError::InvalidInput(format!(
                "dominator negative in cell {j}"
            )));
        }
        Ok(Self {
            base,
            members,
            dominator,
        })
    }

    pub fn base(&self) -> &StringSpec {
        &self.base
    }

    pub fn members(&self) -> &[(usize, StringSpec)] {
        &self.members
    }

    pub fn dominator(&self) -> &PiecewiseConst<f64> {
        &self.dominator
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisRow {
    pub n: usize,
    /// `∫ |p_n - p|`
    pub l1_density_gap: f64,
    /// `∫ |√p_n - √p|²`
    pub sqrt_gap: f64,
    /// `∫ |w_n - w|²`
    pub antider_gap: f64,
    /// `max_j |p_n - p|` over cells, the grid stand-in for a.e. convergence.
    pub max_density_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub hyp0_ok: Vec<bool>,
    pub domination_ok: Vec<bool>,
    pub rows: Vec<HypothesisRow>,
}

impl HypothesisReport {
    pub fn all_ok(&self) -> bool {
        self.hyp0_ok.iter().all(|&b| b) && self.domination_ok.iter().all(|&b| b)
    }
}

/// Integrands are piecewise constant on the shared grid, so every gap is an
/// exact cell sum (summed left to right).
pub fn validate_sequence(seq: &SpecSequence) -> Result<HypothesisReport> {
    let part = seq.base.partition();
    let h = part.width();
    let p = seq.base.p.values();
    let w = seq.base.w.values();
    let g = seq.dominator.values();

    let mut report = HypothesisReport {
        hyp0_ok: Vec::with_capacity(seq.members.len()),
        domination_ok: Vec::with_capacity(seq.members.len()),
        rows: Vec::with_capacity(seq.members.len()),
    };
    for (n, member) in &seq.members {
        part.ensure_same(&member.partition(), &format!("member {n}"))?;
        let pn = member.p.values();
        let wn = member.w.values();

        report.hyp0_ok.push(validate_hyp0(&member.p).ok);
        report
            .domination_ok
            .push(pn.iter().zip(g).all(|(&a, &b)| a <= b));

        let mut l1 = 0.0;
        let mut sq = 0.0;
        let mut anti = 0.0;
        let mut max_gap: f64 = 0.0;
        for j in 0..part.n_cells() {
            let d = (pn[j] - p[j]).abs();
            l1 += d * h;
            let s = pn[j].sqrt() - p[j].sqrt();
            sq += s * s * h;
            let dw = wn[j] - w[j];
            anti += dw * dw * h;
            max_gap = max_gap.max(d);
        }
        report.rows.push(HypothesisRow {
            n: *n,
            l1_density_gap: l1,
            sqrt_gap: sq,
            antider_gap: anti,
            max_density_gap: max_gap,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn part(n: usize) -> GridPartition {
        GridPartition::new(n).unwrap()
    }

    #[test]
    fn grid_needs_two_cells() {
        assert!(GridPartition::new(1).is_err());
        assert!(GridPartition::new(0).is_err());
        let g = part(4);
        assert_eq!(g.node(4), 1.0);
        assert_eq!(g.cell_of(0.25).unwrap(), 1);
        assert!(g.cell_of(1.0).is_err());
    }

    #[test]
    fn piecewise_rejects_non_finite() {
        assert!(PiecewiseConst::new(part(2), vec![1.0, f64::NAN]).is_err());
        assert!(PiecewiseConst::new(part(2), vec![1.0]).is_err());
        let f = PiecewiseConst::new(part(2), vec![1.0, 3.0]).unwrap();
        assert_eq!(f.eval(0.75).unwrap(), 3.0);
        assert!(f.eval(1.0).is_err());
    }

    #[test]
    fn cumulative_constant_density() {
        let p = PiecewiseConst::constant(part(8), 1.0).unwrap();
        let q = cumulative_density(&p).unwrap();
        assert_eq!(q.total(), 1.0);
        assert!((q.eval(0.3).unwrap() - 0.3).abs() < 1e-15);

        let p4 = PiecewiseConst::constant(part(8), 4.0).unwrap();
        let q4 = cumulative_density(&p4).unwrap();
        assert!((q4.eval(0.3).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn cumulative_step_density() {
        let p = PiecewiseConst::new(part(2), vec![1.0, 3.0]).unwrap();
        let q = cumulative_density(&p).unwrap();
        assert_eq!(q.eval(0.25).unwrap(), 0.25);
        assert_eq!(q.eval(0.75).unwrap(), 1.25);
        assert_eq!(q.at_midpoint(1), 1.25);
    }

    #[test]
    fn cumulative_rejects_nonpositive() {
        let p = PiecewiseConst::new(part(3), vec![1.0, 0.0, 2.0]).unwrap();
        assert!(matches!(cumulative_density(&p), Err(GisError::InvalidSpec(_))));
        let w = PiecewiseConst::constant(part(3), 0.0).unwrap();
        assert!(StringSpec::new(w, p).is_err());
    }

    #[test]
    fn sampled_u_examples() {
        let spec = StringSpec::uniform(16, 1.0).unwrap();
        let u = sampled_u(&spec, Complex64::new(2.0, 0.0));
        for (j, uj) in u.values().iter().enumerate() {
            let m = spec.partition().midpoint(j);
            assert!((uj - Complex64::new(4.0 * m, 0.0)).norm() < 1e-14);
        }

        let spec = StringSpec::from_fns(part(16), |_| 1.0, |_| 1.0).unwrap();
        let u = sampled_u(&spec, Complex64::i());
        for (j, uj) in u.values().iter().enumerate() {
            let m = spec.partition().midpoint(j);
            assert!((uj - Complex64::new(-m, 1.0)).norm() < 1e-14);
        }

        let spec = StringSpec::from_fns(part(16), |x| x.sin(), |x| 1.0 + x).unwrap();
        let u = sampled_u(&spec, Complex64::new(0.0, 0.0));
        assert!(u.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn sampled_u_w_term_is_linear() {
        let z = Complex64::new(0.7, -1.3);
        let a = StringSpec::from_fns(part(32), |x| (3.0 * x).cos(), |x| 1.0 + x * x).unwrap();
        let c = 2.5;
        let b = StringSpec::new(a.w().map(|v| c * v).unwrap(), a.p().clone()).unwrap();
        let ua = sampled_u(&a, z);
        let ub = sampled_u(&b, z);
        for j in 0..32 {
            let qterm = z * z * a.cumulative().at_midpoint(j);
            let wa = ua.values()[j] - qterm;
            let wb = ub.values()[j] - qterm;
            assert!((wb - wa * c).norm() <= 1e-14 * (1.0 + wb.norm()));
        }
    }

    #[test]
    fn hyp0_reports() {
        let r = validate_hyp0(&PiecewiseConst::constant(part(4), 1.0).unwrap());
        assert!(r.ok);
        assert_eq!(r.total_mass, 1.0);
        let r = validate_hyp0(&PiecewiseConst::constant(part(4), 4.0).unwrap());
        assert!(r.ok);
        assert_eq!(r.total_mass, 4.0);
        let r = validate_hyp0(&PiecewiseConst::new(part(4), vec![1.0, 1.0, 0.0, 1.0]).unwrap());
        assert!(!r.ok);
        assert_eq!(r.nonpositive_cells, vec![2]);
    }

    #[test]
    fn sequence_density_shift_gaps() {
        let p0 = part(64);
        let base = StringSpec::uniform(64, 1.0).unwrap();
        let members = (1..=5)
            .map(|n| (n, StringSpec::from_fns(p0, |_| 0.0, |_| 1.0 + 1.0 / n as f64).unwrap()))
            .collect();
        let g = PiecewiseConst::constant(p0, 2.0).unwrap();
        let seq = SpecSequence::new(base, members, g).unwrap();
        let rep = validate_sequence(&seq).unwrap();
        assert!(rep.all_ok());
        for row in &rep.rows {
            let exact = 1.0 / row.n as f64;
            assert!((row.l1_density_gap - exact).abs() <= 1e-14 * exact);
            let s = (1.0 + exact).sqrt() - 1.0;
            assert!((row.sqrt_gap - s * s).abs() <= 1e-14 * s * s);
            assert_eq!(row.antider_gap, 0.0);
        }
    }

    #[test]
    fn sequence_antiderivative_wobble() {
        // Closed form: ∫ sin²(2πx) dx = 1/2, so the gap is 1/(2n²).
        let p0 = part(4096);
        let base = StringSpec::uniform(4096, 1.0).unwrap();
        let members: Vec<_> = [1usize, 2, 5, 10]
            .iter()
            .map(|&n| {
                let a = 1.0 / n as f64;
                (n, StringSpec::from_fns(p0, |x| a * (2.0 * PI * x).sin(), |_| 1.0).unwrap())
            })
            .collect();
        let seq =
            SpecSequence::new(base.clone(), members, base.p().clone()).unwrap();
        let rep = validate_sequence(&seq).unwrap();
        for row in &rep.rows {
            let exact = 0.5 / (row.n * row.n) as f64;
            assert!((row.antider_gap - exact).abs() <= 1e-6 * exact, "{row:?}");
        }
    }

    #[test]
    fn identity_sequence_and_domination_failure() {
        let base = StringSpec::from_fns(part(10), |x| x, |x| 1.0 + x).unwrap();
        let seq = SpecSequence::new(
            base.clone(),
            vec![(1, base.clone()), (2, base.clone())],
            base.p().clone(),
        )
        .unwrap();
        let rep = validate_sequence(&seq).unwrap();
        assert!(rep.all_ok());
        for row in &rep.rows {
            assert_eq!(row.l1_density_gap, 0.0);
            assert_eq!(row.sqrt_gap, 0.0);
            assert_eq!(row.antider_gap, 0.0);
        }

        let bigger = StringSpec::from_fns(part(10), |x| x, |x| 2.0 + x).unwrap();
        let seq = SpecSequence::new(base.clone(), vec![(1, bigger)], base.p().clone()).unwrap();
        let rep = validate_sequence(&seq).unwrap();
        assert_eq!(rep.domination_ok, vec![false]);
        assert!(!rep.all_ok());
    }

    #[test]
    fn sequence_partition_mismatch() {
        let base = StringSpec::uniform(10, 1.0).unwrap();
        let other = StringSpec::uniform(12, 1.0).unwrap();
        let g = base.p().clone();
        assert!(matches!(
            SpecSequence::new(base, vec![(1, other)], g),
            Err(GisError::Mismatch(_))
        ));
    }
}
