//! Conjugate gradients for `(K + sigma² I) x = b` with the GRIEF kernel
//! `(Phi W Phiᵀ + sigma² I)⁻¹` as preconditioner.

use nalgebra::{DMatrix, DVector};

use crate::error::{GriefError, Result};
use crate::model::{ModelState, PFactor};

/// Symmetric positive semi-definite operator `v -> K v`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Approximate inverse `v -> M⁻¹ v` of the system matrix.
pub trait Preconditioner {
    fn apply_inv(&self, v: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
}

/// Applies `(Phi W Phiᵀ + sigma² I)⁻¹` as `sigma⁻² (v - Phi P⁻¹ Phiᵀ v)`.
pub struct WoodburyApplier {
    phi: DMatrix<f64>,
    factor: PFactor,
    sigma2: f64,
}

impl WoodburyApplier {
    pub fn new(phi: DMatrix<f64>, state: &ModelState) -> Result<Self> {
        let p = state.w_dense.as_ref().map_or(state.w.len(), DMatrix::nrows);
        if phi.ncols() != p {
            return Err(GriefError::DimensionMismatch(format!(
                "Phi has {} columns, state has {p} weights",
                phi.ncols()
            )));
        }
        let factor = PFactor::new(&phi.tr_mul(&phi), state)?;
        Ok(Self {
            phi,
            factor,
            sigma2: state.sigma2,
        })
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n() {
            return Err(GriefError::DimensionMismatch(format!(
                "vector has length {}, applier expects {}",
                v.len(),
                self.n()
            )));
        }
        Ok(self.apply_unchecked(v))
    }

    fn apply_unchecked(&self, v: &DVector<f64>) -> DVector<f64> {
        let pv = self.phi.tr_mul(v);
        let pv = DMatrix::from_column_slice(pv.len(), 1, pv.as_slice());
        let correction = &self.phi * self.factor.solve(&pv).column(0);
        (v - correction) / self.sigma2
    }
}

impl Preconditioner for WoodburyApplier {
    fn apply_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_unchecked(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖b - (K + sigma² I) x_k‖ / ‖b‖` for `k = 0, 1, ..` (recursively updated).
    pub residuals: Vec<f64>,
    /// `sqrt(r_kᵀ M⁻¹ r_k)` for the same iterates.
    pub precond_residuals: Vec<f64>,
}

/// Preconditioned conjugate gradients from `x = 0`, stopping once the
/// relative residual is at most `tol`. On hitting `max_iters` the last
/// iterate is returned with `converged = false`.
pub fn pcg_solve(
    k: &dyn LinearOperator,
    sigma2: f64,
    precond: &dyn Preconditioner,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<PcgResult> {
    let n = k.dim();
    if b.len() != n {
        return Err(GriefError::DimensionMismatch(format!(
            "right-hand side has length {}, operator has dimension {n}",
            b.len()
        )));
    }
    let system = |v: &DVector<f64>| k.apply(v) + v * sigma2;
    let b_norm = b.norm();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            converged: true,
            residuals: vec![0.0],
            precond_residuals: vec![0.0],
        });
    }
    let mut r = b.clone();
    let mut z = precond.apply_inv(&r);
    let mut rz = r.dot(&z);
    let mut dir = z.clone();
    let mut residuals = vec![1.0];
    let mut precond_residuals = vec![rz.max(0.0).sqrt()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let ad = system(&dir);
        let alpha = rz / dir.dot(&ad);
        x.axpy(alpha, &dir, 1.0);
        r.axpy(-alpha, &ad, 1.0);
        let rel = r.norm() / b_norm;
        residuals.push(rel);
        z = precond.apply_inv(&r);
        let rz_next = r.dot(&z);
        precond_residuals.push(rz_next.max(0.0).sqrt());
        if rel <= tol {
            converged = true;
            break;
        }
        let beta = rz_next / rz;
        rz = rz_next;
        dir = &z + dir * beta;
    }
    if !converged {
        log::warn!("PCG reached {max_iters} iterations without meeting tol {tol:e}");
    }
    Ok(PcgResult {
        x,
        iterations,
        converged,
        residuals,
        precond_residuals,
    })
}
