//! Resolvents of the self-adjoint relation in `H̃ = H'_*[0,1) × L²[0,1)`.
//!
//! Elements of `H̃` are stored as [`StateVector`]s: the first component by
//! its cell slopes (piecewise-linear `f₁` with `f₁(0) = f₁(1-) = 0`, hence
//! zero mean slope), the second by one value per slot. Slot `j` is attached
//! to node `x_j` and carries the lumped mass `p̂_j = q(m_j) - q(m_{j-1})`,
//! which is exactly the point mass implied by freezing `u` at cell midpoints
//! in the propagator. Slot 0 sits on the Dirichlet node and is inert.
//!
//! With that pairing the Green's-function formula
//! `z (T̃ - z)⁻¹ g = Q(h (1, z)ᵀ - g₁ (1, 0)ᵀ)`, `h(x) = ⟨g, Q G(x,·)*⟩`,
//! evaluated with exact cell quadrature reproduces the resolvent of one fixed
//! self-adjoint finite relation, for every `z`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coeff::{GridPartition, PiecewiseConst, StringSpec};
use crate::propagator::{linear_product_integral, HatTest};
use crate::spectral::{fundamental_pair, FundamentalPair};
use crate::{GisError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Power iteration stops once the estimated relative error of `σ` is below this.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 20_000;
pub const POWER_BLOCK: usize = 8;
/// Above this size `operator_norm` trusts the power method alone.
pub const SVD_CROSSCHECK_DIM: usize = 64;
const POWER_SEED: u64 = 0x6a09_e667_f3bc_c908;
/// Largest grid for which a dense resolvent matrix is assembled.
pub const MAX_DENSE_CELLS: usize = 2048;

/// An element of `H̃` (or, read with the `ν`-weighted norm, of `H`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    partition: GridPartition,
    f1_prime: Vec<Complex64>,
    f2: Vec<Complex64>,
}

impl StateVector {
    /// Rejects a first component whose slopes do not integrate to zero.
    pub fn new(partition: GridPartition, f1_prime: Vec<Complex64>, f2: Vec<Complex64>) -> Result<Self> {
        let n = partition.n_cells();
        if f1_prime.len() != n || f2.len() != n {
            return Err(GisError::Mismatch(format!(
                "state vector components must have {n} entries"
            )));
        }
        if f1_prime.iter().chain(&f2).any(|v| !v.is_finite()) {
            return Err(GisError::InvalidInput("state vector not finite".into()));
        }
        let h = partition.width();
        let mean: Complex64 = f1_prime.iter().map(|v| v * h).sum();
        let scale: f64 = 1.0 + f1_prime.iter().map(|v| v.norm() * h).sum::<f64>();
        if mean.norm() > 1e-12 * scale {
            return Err(GisError::InvalidInput(format!(
                "first component does not vanish at 1- (slope integral {})",
                mean.norm()
            )));
        }
        Ok(Self { partition, f1_prime, f2 })
    }

    /// Removes the mean slope so that the first component lies in `H'_*`.
    pub fn mean_free(partition: GridPartition, mut f1_prime: Vec<Complex64>, f2: Vec<Complex64>) -> Result<Self> {
        if f1_prime.is_empty() {
            return Err(GisError::Mismatch("empty state vector".into()));
        }
        let mean = f1_prime.iter().sum::<Complex64>() / f1_prime.len() as f64;
        f1_prime.iter_mut().for_each(|v| *v -= mean);
        Self::new(partition, f1_prime, f2)
    }

    /// Samples slopes at cell midpoints and the second component at slot
    /// positions (nodes `x_0..x_{n-1}`), then removes the mean slope.
    pub fn from_fns(
        partition: GridPartition,
        f1_prime: impl Fn(f64) -> Complex64,
        f2: impl Fn(f64) -> Complex64,
    ) -> Result<Self> {
        let n = partition.n_cells();
        let a = (0..n).map(|j| f1_prime(partition.midpoint(j))).collect();
        let b = (0..n).map(|j| f2(partition.node(j))).collect();
        Self::mean_free(partition, a, b)
    }

    pub fn zero(partition: GridPartition) -> Self {
        let n = partition.n_cells();
        Self { partition, f1_prime: vec![ZERO; n], f2: vec![ZERO; n] }
    }

    /// Seeded complex Gaussian entries, projected onto the mean-free subspace.
    pub fn random(partition: GridPartition, rng: &mut impl Rng) -> Self {
        let n = partition.n_cells();
        let mut draw = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let a: Vec<_> = (0..n).map(|_| draw()).collect();
        let b: Vec<_> = (0..n).map(|_| draw()).collect();
        Self::mean_free(partition, a, b).expect("projected vector is mean free")
    }

    pub fn partition(&self) -> GridPartition {
        self.partition
    }

    pub fn f1_prime(&self) -> &[Complex64] {
        &self.f1_prime
    }

    pub fn f2(&self) -> &[Complex64] {
        &self.f2
    }

    /// Node values of `f₁` with `f₁(0) = 0`.
    pub fn f1_nodes(&self) -> Vec<Complex64> {
        let h = self.partition.width();
        let mut out = Vec::with_capacity(self.f1_prime.len() + 1);
        let mut acc = ZERO;
        out.push(acc);
        for v in &self.f1_prime {
            acc += v * h;
            out.push(acc);
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        let h = self.partition.width();
        self.f1_prime.iter().chain(&self.f2).map(|v| v.norm_sqr() * h).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Norm of `H`, where the second component lives in `L²(ν)` with density `p`.
    pub fn norm_sq_weighted(&self, p: &[f64]) -> f64 {
        let h = self.partition.width();
        let a: f64 = self.f1_prime.iter().map(|v| v.norm_sqr() * h).sum();
        let b: f64 = self.f2.iter().zip(p).map(|(v, &pj)| v.norm_sqr() * pj * h).sum();
        a + b
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        let h = self.partition.width();
        self.f1_prime
            .iter()
            .zip(&other.f1_prime)
            .chain(self.f2.iter().zip(&other.f2))
            .map(|(a, b)| a * b.conj() * h)
            .sum()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            partition: self.partition,
            f1_prime: self.f1_prime.iter().map(|v| v * c).collect(),
            f2: self.f2.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &StateVector) -> Self {
        Self {
            partition: self.partition,
            f1_prime: self.f1_prime.iter().zip(&other.f1_prime).map(|(a, b)| a + b).collect(),
            f2: self.f2.iter().zip(&other.f2).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &StateVector) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Coordinates in the orthonormal basis of the discretized `H̃`:
    /// `n - 1` Helmert vectors for the mean-free slopes, then `n` slot indicators.
    pub fn to_coords(&self) -> Vec<Complex64> {
        let n = self.partition.n_cells();
        let sqrt_h = self.partition.width().sqrt();
        let mut out = Vec::with_capacity(2 * n - 1);
        let mut prefix = ZERO;
        for k in 0..n - 1 {
            prefix += self.f1_prime[k];
            let kk = (k + 1) as f64;
            out.push((prefix - self.f1_prime[k + 1] * kk) * (sqrt_h / (kk * (kk + 1.0)).sqrt()));
        }
        out.extend(self.f2.iter().map(|v| v * sqrt_h));
        out
    }

    pub fn from_coords(partition: GridPartition, coords: &[Complex64]) -> Result<Self> {
        let n = partition.n_cells();
        if coords.len() != 2 * n - 1 {
            return Err(GisError::Mismatch(format!(
                "expected {} coordinates, got {}",
                2 * n - 1,
                coords.len()
            )));
        }
        let inv_sqrt_h = 1.0 / partition.width().sqrt();
        let norms: Vec<f64> = (0..n - 1)
            .map(|k| {
                let kk = (k + 1) as f64;
                (kk * (kk + 1.0)).sqrt()
            })
            .collect();
        let mut f1_prime = vec![ZERO; n];
        let mut suffix = ZERO;
        for i in (0..n).rev() {
            if i < n - 1 {
                suffix += coords[i] / norms[i];
            }
            let mut v = suffix;
            if i >= 1 {
                v -= coords[i - 1] * (i as f64 / norms[i - 1]);
            }
            f1_prime[i] = v * inv_sqrt_h;
        }
        let f2 = coords[n - 1..].iter().map(|v| v * inv_sqrt_h).collect();
        Ok(Self { partition, f1_prime, f2 })
    }
}

/// `P f = f √p`, cell by cell.
pub fn apply_p(f2: &[Complex64], p: &PiecewiseConst<f64>) -> Result<Vec<Complex64>> {
    check_density(f2.len(), p)?;
    Ok(f2.iter().zip(p.values()).map(|(v, &pj)| v * pj.sqrt()).collect())
}

pub fn inverse_p(f2: &[Complex64], p: &PiecewiseConst<f64>) -> Result<Vec<Complex64>> {
    check_density(f2.len(), p)?;
    Ok(f2.iter().zip(p.values()).map(|(v, &pj)| v / pj.sqrt()).collect())
}

fn check_density(len: usize, p: &PiecewiseConst<f64>) -> Result<()> {
    if len != p.values().len() {
        return Err(GisError::Mismatch("density and vector lengths differ".into()));
    }
    if let Some(j) = p.values().iter().position(|&v| v <= 0.0) {
        return Err(GisError::InvalidSpec(format!("density not positive in cell {j}")));
    }
    Ok(())
}

/// `Q f = (f₁, P f₂)`: maps an element of `H` onto `H̃`.
pub fn apply_q(v: &StateVector, p: &PiecewiseConst<f64>) -> Result<StateVector> {
    v.partition.ensure_same(&p.partition(), "Q")?;
    Ok(StateVector { partition: v.partition, f1_prime: v.f1_prime.clone(), f2: apply_p(&v.f2, p)? })
}

pub fn inverse_q(v: &StateVector, p: &PiecewiseConst<f64>) -> Result<StateVector> {
    v.partition.ensure_same(&p.partition(), "Q⁻¹")?;
    Ok(StateVector { partition: v.partition, f1_prime: v.f1_prime.clone(), f2: inverse_p(&v.f2, p)? })
}

/// Density of the lumped node masses per unit length: `(p_{j-1} + p_j) / 2`,
/// with slot 0 given `p_0`.
pub fn slot_density(spec: &StringSpec) -> PiecewiseConst<f64> {
    let p = spec.p().values();
    let vals = (0..p.len())
        .map(|j| if j == 0 { p[0] } else { 0.5 * (p[j - 1] + p[j]) })
        .collect();
    PiecewiseConst::new(spec.partition(), vals).expect("averages of positive values")
}

/// Scalar Green's kernel `ψ₁(max) ψ₂(min) / W` at nodes `x` and `t`.
pub fn greens_function(pair: &FundamentalPair, x: usize, t: usize) -> Complex64 {
    let (lo, hi) = if t < x { (t, x) } else { (x, t) };
    pair.psi1.f()[hi] * pair.psi2.f()[lo] / pair.wronskian
}

/// Resolvent of one string at one `z`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct Resolvent {
    z: Complex64,
    pair: FundamentalPair,
    sqrt_density: Vec<f64>,
}

impl Resolvent {
    pub fn new(spec: &StringSpec, z: Complex64) -> Result<Self> {
        if z == ZERO {
            return Err(GisError::Unsupported(
                "the Green's formula yields z(T - z)⁻¹, so z = 0 is excluded".into(),
            ));
        }
        let pair = fundamental_pair(spec, z).map_err(|e| match e {
            GisError::NearEigenvalue { re, im } => GisError::SingularResolvent { re, im },
            other => other,
        })?;
        let sqrt_density = slot_density(spec).values().iter().map(|v| v.sqrt()).collect();
        Ok(Self { z, pair, sqrt_density })
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn pair(&self) -> &FundamentalPair {
        &self.pair
    }

    pub fn partition(&self) -> GridPartition {
        self.pair.psi1.partition()
    }

    /// `h(x_i) = ⟨g, Q G(x_i, ·)*⟩` at every node, in one forward and one
    /// backward sweep over the two branches of the kernel.
    pub fn kernel_pairing(&self, g: &StateVector) -> Result<Vec<Complex64>> {
        let part = self.partition();
        part.ensure_same(&g.partition, "resolvent input")?;
        let n = part.n_cells();
        let h = part.width();
        let psi1 = self.pair.psi1.f();
        let psi2 = self.pair.psi2.f();
        let zh = self.z * h;

        // below[i] = Σ_{j<i} ..., above[i] = Σ_{j≥i} ...
        let mut below = vec![ZERO; n + 1];
        for j in 0..n {
            let term = g.f1_prime[j] * (psi2[j + 1] - psi2[j])
                + zh * g.f2[j] * self.sqrt_density[j] * psi2[j];
            below[j + 1] = below[j] + term;
        }
        let mut above = vec![ZERO; n + 1];
        for j in (0..n).rev() {
            let term = g.f1_prime[j] * (psi1[j + 1] - psi1[j])
                + zh * g.f2[j] * self.sqrt_density[j] * psi1[j];
            above[j] = above[j + 1] + term;
        }
        let w = self.pair.wronskian;
        Ok((0..=n)
            .map(|i| (psi1[i] * below[i] + psi2[i] * above[i]) / w)
            .collect())
    }

    /// `(T̃ - z)⁻¹ g`.
    pub fn apply(&self, g: &StateVector) -> Result<StateVector> {
        let hx = self.kernel_pairing(g)?;
        let part = self.partition();
        let n = part.n_cells();
        let inv_h = n as f64;
        let inv_z = 1.0 / self.z;

        let f1_prime: Vec<Complex64> = (0..n)
            .map(|j| ((hx[j + 1] - hx[j]) * inv_h - g.f1_prime[j]) * inv_z)
            .collect();
        let f2: Vec<Complex64> = (0..n).map(|j| hx[j] * self.sqrt_density[j]).collect();

        let h = part.width();
        let mean: Complex64 = f1_prime.iter().map(|v| v * h).sum();
        let scale = 1.0 + f1_prime.iter().map(|v| v.norm() * h).sum::<f64>();
        if mean.norm() > 1e-10 * scale {
            return Err(GisError::NonConvergence(format!(
                "resolvent output violates the boundary condition at 1- ({})",
                mean.norm()
            )));
        }
        Ok(StateVector { partition: part, f1_prime, f2 })
    }
}

pub fn resolvent_apply(spec: &StringSpec, z: Complex64, g: &StateVector) -> Result<StateVector> {
    Resolvent::new(spec, z)?.apply(g)
}

/// Dense `(T̃ - z)⁻¹` in the orthonormal basis of [`StateVector::to_coords`].
#[derive(Debug, Clone)]
pub struct ResolventMatrix {
    pub z: Complex64,
    pub partition: GridPartition,
    pub matrix: DMatrix<Complex64>,
}

impl ResolventMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, g: &StateVector) -> Result<StateVector> {
        self.partition.ensure_same(&g.partition, "resolvent matrix input")?;
        let x = DVector::from_vec(g.to_coords());
        let y = &self.matrix * x;
        StateVector::from_coords(self.partition, y.as_slice())
    }
}

pub fn resolvent_matrix(spec: &StringSpec, z: Complex64) -> Result<ResolventMatrix> {
    let part = spec.partition();
    if part.n_cells() > MAX_DENSE_CELLS {
        return Err(GisError::Unsupported(format!(
            "dense resolvent matrices are limited to {MAX_DENSE_CELLS} cells, got {}",
            part.n_cells()
        )));
    }
    let res = Resolvent::new(spec, z)?;
    let dim = 2 * part.n_cells() - 1;
    let columns: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![ZERO; dim];
            e[k] = Complex64::new(1.0, 0.0);
            let basis = StateVector::from_coords(part, &e)?;
            Ok(res.apply(&basis)?.to_coords())
        })
        .collect::<Result<_>>()?;
    let matrix = DMatrix::from_fn(dim, dim, |i, j| columns[j][i]);
    Ok(ResolventMatrix { z, partition: part, matrix })
}

/// Largest singular value by block power iteration on `M* M` with
/// Rayleigh-Ritz extraction. A block of [`POWER_BLOCK`] vectors keeps the
/// rate at `(σ_{b+1}/σ_1)²`, so near-equal leading pairs do not stall it.
pub fn power_method_norm(m: &DMatrix<Complex64>, tol: f64, max_iter: usize) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GisError::InvalidInput("matrix has non-finite entries".into()));
    }
    if m.ncols() == 0 || m.nrows() == 0 || m.iter().all(|v| *v == ZERO) {
        return Ok(0.0);
    }
    let b = POWER_BLOCK.min(m.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let start = DMatrix::from_fn(m.ncols(), b, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut v = start.qr().q();

    let mut prev = 0.0;
    let mut prev_change = f64::INFINITY;
    for iter in 0..max_iter {
        let w = m * &v;
        // Ritz value: never above σ_1, increases towards it.
        let sigma = w.clone().svd(false, false).singular_values.max();
        if sigma == 0.0 {
            return Ok(0.0);
        }
        v = m.ad_mul(&w).qr().q();

        let change = (sigma - prev).abs();
        let rate = if prev_change.is_finite() && prev_change > 0.0 {
            (change / prev_change).min(1.0)
        } else {
            1.0
        };
        let err = if rate < 1.0 { change * rate / (1.0 - rate) } else { change };
        if iter >= 3 && err <= tol * sigma {
            return Ok(sigma);
        }
        prev = sigma;
        prev_change = change;
    }
    Err(GisError::NonConvergence(format!(
        "power method did not settle within {max_iter} iterations"
    )))
}

/// Spectral norm. Small matrices are cross-checked against a full SVD.
pub fn operator_norm(m: &DMatrix<Complex64>) -> Result<f64> {
    let power = power_method_norm(m, POWER_TOL, POWER_MAX_ITER)?;
    if m.nrows().max(m.ncols()) <= SVD_CROSSCHECK_DIM && m.nrows() > 0 && m.ncols() > 0 {
        let exact = m.clone().svd(false, false).singular_values.max();
        if (exact - power).abs() > 1e-8 * exact.max(1e-300) {
            return Err(GisError::NonConvergence(format!(
                "power method {power} disagrees with SVD {exact}"
            )));
        }
        return Ok(exact);
    }
    Ok(power)
}

/// `‖(T̃_A - z)⁻¹ - (T̃_B - z)⁻¹‖`.
pub fn resolvent_difference(a: &StringSpec, b: &StringSpec, z: Complex64) -> Result<f64> {
    a.partition().ensure_same(&b.partition(), "resolvent difference")?;
    let ma = resolvent_matrix(a, z)?;
    let mb = resolvent_matrix(b, z)?;
    operator_norm(&(ma.matrix - mb.matrix))
}

/// Weak-form defect of `-f₁'' = ω k₁ + ν k₂` for a pair `(f, k)` given in
/// `H̃` coordinates, against a hat test function.
///
/// Slot values of `k₂` are read as a function that is constant on the dual
/// cell `[x_j - h/2, x_j + h/2)` of their node, and `∫ k₂ φ dν` is integrated
/// exactly against the cellwise density, so the defect measures the
/// discretization error of the lumped masses.
pub fn relation_residual(
    spec: &StringSpec,
    f: &StateVector,
    k: &StateVector,
    test: HatTest,
) -> Result<Complex64> {
    let part = spec.partition();
    part.ensure_same(&f.partition, "relation residual")?;
    part.ensure_same(&k.partition, "relation residual")?;
    let phi = test.nodes(part)?;
    let n = part.n_cells();
    let h = part.width();
    let w = spec.w().values();
    let p = spec.p().values();
    let slot = slot_density(spec);
    let k1 = k.f1_nodes();

    let mut acc = ZERO;
    for j in 0..n {
        let dphi = (phi[j + 1] - phi[j]) / h;
        acc += f.f1_prime[j] * dphi * h;
        // ω(k₁ φ) = -∫ w (k₁ φ)'
        acc += w[j] * (k1[j + 1] * phi[j + 1] - k1[j] * phi[j]);
    }
    for j in 0..n {
        let k2 = k.f2[j] / slot.values()[j].sqrt();
        let mid_left = if j > 0 { 0.5 * (phi[j - 1] + phi[j]) } else { 0.0 };
        let mid_right = 0.5 * (phi[j] + phi[j + 1]);
        let mut mass = linear_product_integral(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), phi[j], mid_right, 0.5 * h) * p[j];
        if j > 0 {
            mass += linear_product_integral(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), mid_left, phi[j], 0.5 * h) * p[j - 1];
        }
        acc -= k2 * mass;
    }
    Ok(acc)
}
