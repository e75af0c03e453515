//! Shooting for `-f'' = z ω f + z² ν f` through the first-order system
//! `F' = R F` with `F = (f, f' + u f)` and `R = ((-u, 1), (-u², u))`.
//!
//! `u` is frozen at its cell-midpoint value. Since `R² = 0`, the exact
//! propagator over a cell is `I + hR`, which is unimodular; the discrete
//! solution is piecewise linear in `f`.

use num_complex::Complex64;

use crate::coeff::{GridPartition, StringSpec};
use crate::numeric::det2;
use crate::{GisError, Result};

/// Midpoint samples of `u` for one spectral parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCoefficient {
    partition: GridPartition,
    z: Complex64,
    u_mid: Vec<Complex64>,
}

impl SampledCoefficient {
    pub fn new(partition: GridPartition, z: Complex64, u_mid: Vec<Complex64>) -> Result<Self> {
        if u_mid.len() != partition.n_cells() {
            return Err(GisError::Mismatch(format!(
                "expected {} samples of u, got {}",
                partition.n_cells(),
                u_mid.len()
            )));
        }
        if let Some(j) = u_mid.iter().position(|u| !u.is_finite()) {
            return Err(GisError::InvalidInput(format!("u is not finite in cell {j}")));
        }
        Ok(Self::from_parts(partition, z, u_mid))
    }

    pub(crate) fn from_parts(partition: GridPartition, z: Complex64, u_mid: Vec<Complex64>) -> Self {
        Self { partition, z, u_mid }
    }

    pub fn partition(&self) -> GridPartition {
        self.partition
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn values(&self) -> &[Complex64] {
        &self.u_mid
    }
}

/// A 2×2 complex matrix acting on `F = (f, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl TransferMatrix {
    pub fn det(&self) -> Complex64 {
        det2(self.a, self.b, self.c, self.d)
    }

    #[inline]
    pub fn apply(&self, f: Complex64, s: Complex64) -> (Complex64, Complex64) {
        (self.a * f + self.b * s, self.c * f + self.d * s)
    }

    /// Inverse of a unimodular matrix.
    pub fn unimodular_inverse(&self) -> Self {
        Self {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }
}

/// `exp(hR(u)) = I + hR(u) = ((1 - hu, h), (-hu², 1 + hu))`.
pub fn cell_transfer(u: Complex64, h: f64) -> TransferMatrix {
    let hu = u * h;
    TransferMatrix {
        a: 1.0 - hu,
        b: Complex64::new(h, 0.0),
        c: -hu * u,
        d: 1.0 + hu,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Left,
    Right,
}

/// Node values of `F = (f, s)`, `s = f' + u f`, for one `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    z: Complex64,
    partition: GridPartition,
    f: Vec<Complex64>,
    s: Vec<Complex64>,
    delta0: Complex64,
}

impl SolutionPath {
    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn partition(&self) -> GridPartition {
        self.partition
    }

    /// `f` at nodes `0..=n_cells`; the last entry stands for `f(1-)`.
    pub fn f(&self) -> &[Complex64] {
        &self.f
    }

    pub fn s(&self) -> &[Complex64] {
        &self.s
    }

    /// `f'(0-)`.
    pub fn delta0(&self) -> Complex64 {
        self.delta0
    }

    pub fn f_end(&self) -> Complex64 {
        self.f[self.f.len() - 1]
    }

    /// Cell slopes `(f_{j+1} - f_j) / h` of the piecewise-linear `f`.
    pub fn slopes(&self) -> Vec<Complex64> {
        let inv_h = self.partition.n_cells() as f64;
        self.f.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
    }

    pub fn max_abs_f(&self) -> f64 {
        self.f.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            z: self.z,
            partition: self.partition,
            f: self.f.iter().map(|v| v * c).collect(),
            s: self.s.iter().map(|v| v * c).collect(),
            delta0: self.delta0 * c,
        }
    }
}

/// Propagates `data = F` from the chosen endpoint across all cells.
///
/// From the right the data is `F(1-) = (0, a)`, i.e. `f(1-) = 0` and
/// `f'(1-) = a`; a nonzero first component is rejected.
pub fn propagate(
    coeff: &SampledCoefficient,
    start: Endpoint,
    data: (Complex64, Complex64),
) -> Result<SolutionPath> {
    let (d1, d2) = data;
    if !(d1.is_finite() && d2.is_finite()) {
        return Err(GisError::InvalidInput("initial data not finite".into()));
    }
    let n = coeff.partition.n_cells();
    let h = coeff.partition.width();
    let zero = Complex64::new(0.0, 0.0);
    let mut f = vec![zero; n + 1];
    let mut s = vec![zero; n + 1];

    match start {
        Endpoint::Left => {
            f[0] = d1;
            s[0] = d2;
            for j in 0..n {
                let (fj, sj) = cell_transfer(coeff.u_mid[j], h).apply(f[j], s[j]);
                if !(fj.is_finite() && sj.is_finite()) {
                    return Err(GisError::Overflow { cell: j });
                }
                f[j + 1] = fj;
                s[j + 1] = sj;
            }
        }
        Endpoint::Right => {
            if d1 != zero {
                return Err(GisError::InvalidInput(
                    "right-endpoint data must have f(1-) = 0".into(),
                ));
            }
            f[n] = d1;
            s[n] = d2;
            for j in (0..n).rev() {
                let inv = cell_transfer(coeff.u_mid[j], h).unimodular_inverse();
                let (fj, sj) = inv.apply(f[j + 1], s[j + 1]);
                if !(fj.is_finite() && sj.is_finite()) {
                    return Err(GisError::Overflow { cell: j });
                }
                f[j] = fj;
                s[j] = sj;
            }
        }
    }

    Ok(SolutionPath {
        z: coeff.z,
        partition: coeff.partition,
        delta0: s[0],
        f,
        s,
    })
}

/// `f'_j = s_j - u_j f_j` on each cell.
pub fn reconstruct_derivative(path: &SolutionPath, coeff: &SampledCoefficient) -> Result<Vec<Complex64>> {
    path.partition
        .ensure_same(&coeff.partition, "path and coefficient")?;
    Ok(coeff
        .u_mid
        .iter()
        .enumerate()
        .map(|(j, &u)| path.s[j] - u * path.f[j])
        .collect())
}

/// Hat test function on a coarse uniform mesh of `coarse_cells` cells:
/// peak 1 at `index / coarse_cells`, support of half-width `1 / coarse_cells`.
///
/// `index = 0` gives the half hat with `h(0) = 1`, which exercises the
/// `Δ_f h(0)` term; the support must stay away from `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HatTest {
    pub index: usize,
    pub coarse_cells: usize,
}

impl HatTest {
    pub fn new(index: usize, coarse_cells: usize) -> Self {
        Self { index, coarse_cells }
    }

    fn check(&self, partition: GridPartition) -> Result<usize> {
        if self.coarse_cells < 2 || partition.n_cells() % self.coarse_cells != 0 {
            return Err(GisError::InvalidInput(format!(
                "hat mesh of {} cells does not refine into {} cells",
                self.coarse_cells,
                partition.n_cells()
            )));
        }
        if self.index + 1 >= self.coarse_cells {
            return Err(GisError::InvalidInput(
                "test function support touches x = 1".into(),
            ));
        }
        Ok(partition.n_cells() / self.coarse_cells)
    }

    /// Node values of the hat on `partition`.
    pub fn nodes(&self, partition: GridPartition) -> Result<Vec<f64>> {
        let r = self.check(partition)?;
        let peak = (self.index * r) as i64;
        Ok((0..=partition.n_cells())
            .map(|i| (1.0 - (i as i64 - peak).unsigned_abs() as f64 / r as f64).max(0.0))
            .collect())
    }
}

/// `∫_cell a b` for linear `a`, `b` given by their end values.
#[inline]
pub(crate) fn linear_product_integral(
    a0: Complex64,
    a1: Complex64,
    b0: f64,
    b1: f64,
    h: f64,
) -> Complex64 {
    (a0 * (2.0 * b0 + b1) + a1 * (b0 + 2.0 * b1)) * (h / 6.0)
}

/// Weak-form defect `Δ_f φ(0) + ∫ f'φ' - z ω(fφ) - z² ∫ fφ dν` with
/// `ω(fφ) = -∫ w (fφ)'`, integrated exactly cell by cell.
pub fn weak_residual(
    path: &SolutionPath,
    spec: &StringSpec,
    z: Complex64,
    test: HatTest,
) -> Result<Complex64> {
    let part = spec.partition();
    path.partition.ensure_same(&part, "path and spec")?;
    if path.z != z {
        return Err(GisError::Mismatch("path was computed for a different z".into()));
    }
    let phi = test.nodes(part)?;
    let h = part.width();
    let w = spec.w().values();
    let p = spec.p().values();
    let f = &path.f;
    let z2 = z * z;

    let mut acc = path.delta0 * phi[0];
    for j in 0..part.n_cells() {
        if phi[j] == 0.0 && phi[j + 1] == 0.0 {
            continue;
        }
        let df = (f[j + 1] - f[j]) / h;
        let dphi = (phi[j + 1] - phi[j]) / h;
        acc += df * dphi * h;
        acc += z * w[j] * (f[j + 1] * phi[j + 1] - f[j] * phi[j]);
        acc -= z2 * p[j] * linear_product_integral(f[j], f[j + 1], phi[j], phi[j + 1], h);
    }
    Ok(acc)
}
