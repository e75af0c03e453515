//! Fundamental solutions and the real spectrum of the Dirichlet relation.
//!
//! `z` is an eigenvalue exactly when the solution with `f(0) = 0`,
//! `f'(0-) = 1` also vanishes at `1-`, so the spectrum is the zero set of
//! `E(z) = ψ₂(1-; z)`. Only simple real zeros (sign changes) are located.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::{sampled_u, StringSpec};
use crate::propagator::{propagate, Endpoint, SolutionPath};
use crate::{GisError, Result};

/// `|φ(0)| / max|φ|` below this means `z` sits on (or next to) an eigenvalue.
pub const NEAR_EIGENVALUE_RATIO: f64 = 1e-8;

pub const DEFAULT_SCAN_STEP: f64 = 0.01;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FundamentalPair {
    pub z: Complex64,
    /// `ψ₁(0) = 1`, `ψ₁(1-) = 0`.
    pub psi1: SolutionPath,
    /// `ψ₂(0) = 0`, `ψ₂'(0-) = 1`.
    pub psi2: SolutionPath,
    pub wronskian: Complex64,
}

pub fn fundamental_pair(spec: &StringSpec, z: Complex64) -> Result<FundamentalPair> {
    let coeff = sampled_u(spec, z);
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let psi2 = propagate(&coeff, Endpoint::Left, (zero, one))?;
    let phi = propagate(&coeff, Endpoint::Right, (zero, one))?;
    let phi0 = phi.f()[0];
    if phi0.norm() < NEAR_EIGENVALUE_RATIO * phi.max_abs_f() {
        return Err(GisError::NearEigenvalue { re: z.re, im: z.im });
    }
    let psi1 = phi.scaled(one / phi0);
    let wronskian = wronskian(&psi1, &psi2)?;
    Ok(FundamentalPair {
        z,
        psi1,
        psi2,
        wronskian,
    })
}

/// `W(θ, φ) = θ(0) φ'(0-) - θ'(0-) φ(0)`.
pub fn wronskian(theta: &SolutionPath, phi: &SolutionPath) -> Result<Complex64> {
    if theta.z() != phi.z() {
        return Err(GisError::Mismatch("Wronskian of paths with different z".into()));
    }
    theta
        .partition()
        .ensure_same(&phi.partition(), "Wronskian operands")?;
    Ok(theta.f()[0] * phi.delta0() - theta.delta0() * phi.f()[0])
}

/// `E(z) = ψ₂(1-; z)`; real for real `z`, and `E(0) = 1`.
pub fn characteristic(spec: &StringSpec, z: Complex64) -> Result<Complex64> {
    let coeff = sampled_u(spec, z);
    let path = propagate(
        &coeff,
        Endpoint::Left,
        (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
    )?;
    Ok(path.f_end())
}

/// Eigenvalues found inside a real window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub window: (f64, f64),
    pub eigenvalues: Vec<f64>,
    /// `|E(z_k)|` at each reported eigenvalue.
    pub residuals: Vec<f64>,
    pub scan_step: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn real_characteristic(spec: &StringSpec, z: f64) -> Result<f64> {
    characteristic(spec, Complex64::new(z, 0.0)).map(|e| e.re)
}

/// Scans `E` on a grid of pitch `scan_step`, then bisects every sign change
/// down to width `tol`. Even-order zeros produce no sign change and are missed;
/// `z = 0` is never reported since `E(0) = 1`.
pub fn find_eigenvalues(
    spec: &StringSpec,
    window: (f64, f64),
    scan_step: f64,
    tol: f64,
) -> Result<Spectrum> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(GisError::InvalidInput(format!("invalid window [{lo}, {hi}]")));
    }
    if !(scan_step > 0.0 && tol > 0.0) {
        return Err(GisError::InvalidInput("scan_step and tol must be positive".into()));
    }

    let steps = ((hi - lo) / scan_step).ceil() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { hi } else { lo + k as f64 * scan_step })
        .collect();
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&z| real_characteristic(spec, z))
        .collect::<Result<_>>()?;

    let brackets: Vec<(f64, f64, f64)> = grid
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0] != 0.0 && v[0].signum() != v[1].signum())
        .map(|(g, v)| (g[0], g[1], v[0]))
        .collect();

    let mut roots: Vec<(f64, f64)> = brackets
        .par_iter()
        .map(|&(a, b, fa)| bisect(spec, a, b, fa, tol))
        .collect::<Result<_>>()?;
    // Exact zeros on the scan grid that are strictly inside the window.
    for (k, (&z, &v)) in grid.iter().zip(&values).enumerate() {
        if v == 0.0 && k > 0 && k < steps && z != 0.0 {
            roots.push((z, 0.0));
        }
    }
    roots.retain(|&(z, _)| z > lo && z < hi && z != 0.0);
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots.dedup_by(|a, b| (a.0 - b.0).abs() <= tol);

    Ok(Spectrum {
        window,
        eigenvalues: roots.iter().map(|r| r.0).collect(),
        residuals: roots.iter().map(|r| r.1).collect(),
        scan_step,
    })
}

fn bisect(spec: &StringSpec, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<(f64, f64)> {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = real_characteristic(spec, m)?;
        if fm == 0.0 {
            return Ok((m, 0.0));
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let z = 0.5 * (a + b);
    let residual = characteristic(spec, Complex64::new(z, 0.0))?.norm();
    Ok((z, residual))
}
