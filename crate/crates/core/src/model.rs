//! Marginal likelihood, gradients and prediction for the re-weighted
//! eigenfunction kernel `k(x, z) = sum_i w_i phi_i(x) phi_i(z)`.
//!
//! With `r = Phiᵀy`, `A = PhiᵀPhi` and `P = sigma² W⁻¹ + A`, the inversion and
//! determinant lemmas give
//!
//! ```text
//! yᵀ(K + sigma² I)⁻¹y   = (yᵀy - rᵀP⁻¹r) / sigma²
//! log|K + sigma² I|      = log|P| + log|W| + (n - p) log sigma²
//! ```
//!
//! `P` is never formed directly. Writing `W = R Rᵀ` (`R = diag(sqrt w)` for
//! diagonal weights), `P⁻¹ = R B⁻¹ Rᵀ` with `B = sigma² I + RᵀAR` and
//! `log|P| + log|W| = log|B|`. `B` stays well conditioned as weights go to
//! zero, where `P` itself would overflow.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::Eigenfunctions;
use crate::error::{GriefError, Result};

/// Relative singular value cutoff defining the effective rank of `Phi`.
pub const SVD_DROP_TOL: f64 = 1e-10;
const JITTER: f64 = 1e-10;

/// `PhiᵀPhi`, either explicit or known to be the identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Gram {
    Dense(DMatrix<f64>),
    Identity(usize),
}

/// Training-data summaries that make likelihood evaluations independent of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub yty: f64,
    pub r: DVector<f64>,
    pub gram: Gram,
    pub n: usize,
}

impl SuffStats {
    /// Statistics of an orthonormal basis (`A = I`).
    pub fn orthogonal(yty: f64, r: DVector<f64>, n: usize) -> Self {
        let p = r.len();
        Self {
            yty,
            r,
            gram: Gram::Identity(p),
            n,
        }
    }

    pub fn p(&self) -> usize {
        self.r.len()
    }

    pub fn is_orthogonal(&self) -> bool {
        matches!(self.gram, Gram::Identity(_))
    }

    pub fn a(&self) -> DMatrix<f64> {
        match &self.gram {
            Gram::Dense(a) => a.clone(),
            Gram::Identity(p) => DMatrix::identity(*p, *p),
        }
    }

    /// Same statistics with an explicit Gram matrix.
    pub fn to_dense(&self) -> Self {
        Self {
            gram: Gram::Dense(self.a()),
            ..self.clone()
        }
    }
}

pub fn precompute(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<SuffStats> {
    if phi.nrows() != y.len() {
        return Err(GriefError::DimensionMismatch(format!(
            "Phi has {} rows, y has length {}",
            phi.nrows(),
            y.len()
        )));
    }
    Ok(SuffStats {
        yty: y.dot(y),
        r: phi.tr_mul(y),
        gram: Gram::Dense(phi.tr_mul(phi)),
        n: y.len(),
    })
}

/// Eigenfunction weights, noise variance and the optional prior extensions
/// (weight mean `mu`, dense weight covariance `w_dense`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub w: DVector<f64>,
    pub sigma2: f64,
    pub mu: Option<DVector<f64>>,
    pub w_dense: Option<DMatrix<f64>>,
}

impl ModelState {
    pub fn new(w: DVector<f64>, sigma2: f64) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(GriefError::InvalidParameter(format!(
                "weights must be positive and finite, got {bad}"
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "noise variance must be positive and finite, got {sigma2}"
            )));
        }
        Ok(Self {
            w,
            sigma2,
            mu: None,
            w_dense: None,
        })
    }

    /// Unit weights, i.e. the plain Nyström kernel.
    pub fn unit(p: usize, sigma2: f64) -> Result<Self> {
        Self::new(DVector::from_element(p, 1.0), sigma2)
    }

    pub fn with_mean(mut self, mu: DVector<f64>) -> Self {
        self.mu = Some(mu);
        self
    }

    /// Replaces the diagonal weights by a dense SPD weight covariance.
    pub fn with_dense_w(mut self, w: DMatrix<f64>) -> Self {
        self.w_dense = Some(w);
        self
    }

    fn check(&self, stats: &SuffStats) -> Result<()> {
        let p = stats.p();
        let wp = self.w_dense.as_ref().map_or(self.w.len(), DMatrix::nrows);
        if wp != p || self.mu.as_ref().is_some_and(|m| m.len() != p) {
            return Err(GriefError::DimensionMismatch(format!(
                "state has {wp} weights, statistics have p = {p}"
            )));
        }
        Ok(())
    }
}

/// Marginal likelihood value and its derivatives in the raw parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LmlEval {
    pub value: f64,
    pub dw: DVector<f64>,
    pub dsigma2: f64,
}

/// `r` and `yᵀy` after shifting the targets by the prior mean `Phi mu`.
fn centered(stats: &SuffStats, mu: Option<&DVector<f64>>) -> (f64, DVector<f64>) {
    match mu {
        None => (stats.yty, stats.r.clone()),
        Some(mu) => match &stats.gram {
            Gram::Dense(a) => {
                let amu = a * mu;
                (stats.yty - 2.0 * stats.r.dot(mu) + mu.dot(&amu), &stats.r - amu)
            }
            Gram::Identity(_) => (stats.yty - 2.0 * stats.r.dot(mu) + mu.dot(mu), &stats.r - mu),
        },
    }
}

/// Square root factor of the weight covariance.
enum WeightRoot {
    Diag(DVector<f64>),
    Lower(DMatrix<f64>),
}

impl WeightRoot {
    fn new(state: &ModelState) -> Result<Self> {
        match &state.w_dense {
            None => Ok(Self::Diag(state.w.map(f64::sqrt))),
            Some(w) => {
                if (w - w.transpose()).amax() > 1e-12 * w.amax() {
                    return Err(GriefError::NotPositiveDefinite("W is not symmetric".into()));
                }
                let chol = Cholesky::new(w.clone()).ok_or_else(|| {
                    GriefError::NotPositiveDefinite("dense weight matrix W".into())
                })?;
                Ok(Self::Lower(chol.l()))
            }
        }
    }

    /// `Rᵀ v`
    fn tr_mul(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Diag(s) => {
                let mut out = v.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= s[i];
                }
                out
            }
            Self::Lower(l) => l.tr_mul(v),
        }
    }

    /// `R v`
    fn mul(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Diag(_) => self.tr_mul(v),
            Self::Lower(l) => l * v,
        }
    }
}

/// Factorization of `P = sigma² W⁻¹ + A` through `B = sigma² I + RᵀAR`.
pub(crate) struct PFactor {
    root: WeightRoot,
    chol: Cholesky<f64, Dyn>,
    /// `log|P| + log|W| = log|B|`
    log_det_b: f64,
}

impl PFactor {
    pub(crate) fn new(a: &DMatrix<f64>, state: &ModelState) -> Result<Self> {
        let root = WeightRoot::new(state)?;
        let p = a.nrows();
        let mut b = root.tr_mul(&root.tr_mul(a).transpose());
        for i in 0..p {
            b[(i, i)] += state.sigma2;
        }
        let chol = match Cholesky::new(b.clone()) {
            Some(c) => c,
            None => {
                let jitter = JITTER * b.trace() / p as f64;
                log::warn!("P factorization failed; retrying with jitter {jitter:e}");
                for i in 0..p {
                    b[(i, i)] += jitter;
                }
                Cholesky::new(b).ok_or_else(|| {
                    GriefError::NotPositiveDefinite(
                        "P = sigma² W⁻¹ + A even after jitter".into(),
                    )
                })?
            }
        };
        let log_det_b = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            root,
            chol,
            log_det_b,
        })
    }

    /// `P⁻¹ v`
    pub(crate) fn solve(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.root.mul(&self.chol.solve(&self.root.tr_mul(v)))
    }

    /// Column-wise `vᵀ P⁻¹ v`.
    fn quad_cols(&self, v: &DMatrix<f64>) -> DVector<f64> {
        let mut z = self.root.tr_mul(v);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut z);
        DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.norm_squared()))
    }
}

fn lml_from(log_det_b: f64, rpr: f64, yty: f64, sigma2: f64, n: usize, p: usize) -> f64 {
    -0.5 * (log_det_b
        + (n as f64 - p as f64) * sigma2.ln()
        + (yty - rpr) / sigma2
        + n as f64 * (2.0 * PI).ln())
}

fn general_value(stats: &SuffStats, state: &ModelState) -> Result<f64> {
    state.check(stats)?;
    let (yty, r) = centered(stats, state.mu.as_ref());
    let f = PFactor::new(&stats.a(), state)?;
    let rm = DMatrix::from_column_slice(r.len(), 1, r.as_slice());
    let rpr = f.quad_cols(&rm)[0];
    Ok(lml_from(f.log_det_b, rpr, yty, state.sigma2, stats.n, stats.p()))
}

/// Log marginal likelihood in `O(p³)`. Honors `mu` and `w_dense` when set.
pub fn lml(stats: &SuffStats, state: &ModelState) -> Result<f64> {
    general_value(stats, state)
}

/// Log marginal likelihood with a dense SPD weight covariance.
pub fn lml_dense_w(stats: &SuffStats, w_dense: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    let state = ModelState {
        w: DVector::from_element(w_dense.nrows(), 1.0),
        sigma2,
        mu: None,
        w_dense: Some(w_dense.clone()),
    };
    general_value(stats, &state)
}

/// Log marginal likelihood under the weight prior mean `state.mu`.
pub fn lml_with_mean(stats: &SuffStats, state: &ModelState) -> Result<f64> {
    if state.mu.is_none() {
        return Err(GriefError::InvalidParameter("state has no prior mean".into()));
    }
    general_value(stats, state)
}

/// Value and all `p + 1` derivatives with respect to `w` and `sigma²`, `O(p³)`.
pub fn lml_and_grads(stats: &SuffStats, state: &ModelState) -> Result<LmlEval> {
    if state.w_dense.is_some() {
        return Err(GriefError::InvalidParameter(
            "weight gradients are defined for diagonal W only".into(),
        ));
    }
    state.check(stats)?;
    let (yty, r) = centered(stats, state.mu.as_ref());
    let a = stats.a();
    let f = PFactor::new(&a, state)?;
    let s2 = state.sigma2;
    let n = stats.n;
    let p = stats.p();

    let rm = DMatrix::from_column_slice(p, 1, r.as_slice());
    let p_inv_r = f.solve(&rm).column(0).into_owned();
    let p_inv_a = f.solve(&a);
    let rpr = r.dot(&p_inv_r);
    let value = lml_from(f.log_det_b, rpr, yty, s2, n, p);

    let fit = &r - &a * &p_inv_r;
    let dw = DVector::from_fn(p, |i, _| {
        let complexity = a[(i, i)] - a.column(i).dot(&p_inv_a.column(i));
        fit[i] * fit[i] / (2.0 * s2 * s2) - complexity / (2.0 * s2)
    });
    let rpapr = p_inv_r.dot(&(&a * &p_inv_r));
    let dsigma2 = (yty - 2.0 * rpr + rpapr) / (2.0 * s2 * s2) - (n as f64 - p_inv_a.trace()) / (2.0 * s2);
    Ok(LmlEval { value, dw, dsigma2 })
}

/// Derivatives only; see [`lml_and_grads`].
pub fn lml_grads(stats: &SuffStats, state: &ModelState) -> Result<(DVector<f64>, f64)> {
    lml_and_grads(stats, state).map(|e| (e.dw, e.dsigma2))
}

/// Linear map that makes the basis orthonormal on the training inputs:
/// `Phi_t = Phi V diag(1 / sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub v: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

impl Transform {
    pub fn effective_p(&self) -> usize {
        self.sigma.len()
    }

    pub fn apply(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = phi * &self.v;
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col /= self.sigma[j];
        }
        out
    }
}

/// SVD-based orthogonalization of `Phi`. Singular values below
/// `SVD_DROP_TOL * max` are dropped, which defines the effective size `p̃`.
pub fn orthogonalize(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<(Transform, SuffStats)> {
    if phi.nrows() != y.len() {
        return Err(GriefError::DimensionMismatch(format!(
            "Phi has {} rows, y has length {}",
            phi.nrows(),
            y.len()
        )));
    }
    // Thin QR first so the SVD runs on a min(n, p) x p triangle.
    let r_factor = phi.clone().qr().r();
    let svd = r_factor.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(GriefError::RankZero);
    }
    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > SVD_DROP_TOL * smax)
        .collect();
    keep.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let v = v_t.select_rows(&keep).transpose();
    let sigma = DVector::from_iterator(keep.len(), keep.iter().map(|&i| svd.singular_values[i]));
    let r = (v.tr_mul(&phi.tr_mul(y))).component_div(&sigma);
    let stats = SuffStats::orthogonal(y.dot(y), r, y.len());
    Ok((Transform { v, sigma }, stats))
}

/// Value and derivatives for orthogonalized statistics in `O(p̃)`.
pub fn lml_fast(stats: &SuffStats, state: &ModelState) -> Result<LmlEval> {
    if !stats.is_orthogonal() {
        return Err(GriefError::NotOrthogonal);
    }
    if state.w_dense.is_some() {
        return Err(GriefError::InvalidParameter(
            "the orthogonal fast path needs diagonal W".into(),
        ));
    }
    state.check(stats)?;
    let (yty, r) = centered(stats, state.mu.as_ref());
    let s2 = state.sigma2;
    let n = stats.n;
    let p = stats.p();

    let mut log_det_b = 0.0;
    let mut rpr = 0.0;
    let mut rpapr = 0.0;
    let mut tr_pa = 0.0;
    let mut dw = DVector::zeros(p);
    for i in 0..p {
        let w = state.w[i];
        let b = s2 + w;
        let p_inv = w / b;
        let ri = r[i];
        log_det_b += b.ln();
        rpr += ri * ri * p_inv;
        rpapr += ri * ri * p_inv * p_inv;
        tr_pa += p_inv;
        let fit = ri - p_inv * ri;
        dw[i] = fit * fit / (2.0 * s2 * s2) - (1.0 - p_inv) / (2.0 * s2);
    }
    let value = lml_from(log_det_b, rpr, yty, s2, n, p);
    let dsigma2 = (yty - 2.0 * rpr + rpapr) / (2.0 * s2 * s2) - (n as f64 - tr_pa) / (2.0 * s2);
    Ok(LmlEval { value, dw, dsigma2 })
}

/// Pointwise predictive mean and variance (variance includes the noise).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

/// Posterior prediction from test features in the same coordinates as
/// `stats` (transformed features when `stats` is orthogonal).
///
/// The weight posterior is `N(mu + P⁻¹(r - A mu), sigma² P⁻¹)`, so the
/// predictive variance is `sigma² (phi*ᵀ P⁻¹ phi* + 1)`.
pub fn predict_features(
    phi_star: &DMatrix<f64>,
    stats: &SuffStats,
    state: &ModelState,
) -> Result<Prediction> {
    state.check(stats)?;
    if phi_star.ncols() != stats.p() {
        return Err(GriefError::DimensionMismatch(format!(
            "test features have {} columns, model has p = {}",
            phi_star.ncols(),
            stats.p()
        )));
    }
    let (_, r) = centered(stats, state.mu.as_ref());
    let s2 = state.sigma2;
    let (mut mean, quad) = match (&stats.gram, &state.w_dense) {
        (Gram::Identity(_), None) => {
            let p_inv = state.w.map(|w| w / (s2 + w));
            let mean = phi_star * r.component_mul(&p_inv);
            let quad = DVector::from_fn(phi_star.nrows(), |k, _| {
                phi_star
                    .row(k)
                    .iter()
                    .zip(p_inv.iter())
                    .map(|(v, pi)| v * v * pi)
                    .sum()
            });
            (mean, quad)
        }
        _ => {
            let f = PFactor::new(&stats.a(), state)?;
            let rm = DMatrix::from_column_slice(r.len(), 1, r.as_slice());
            let mean = phi_star * f.solve(&rm).column(0);
            (mean, f.quad_cols(&phi_star.transpose()))
        }
    };
    if let Some(mu) = &state.mu {
        mean += phi_star * mu;
    }
    let var = quad.map(|q| s2 * (q + 1.0));
    Ok(Prediction { mean, var })
}

/// Posterior prediction at new inputs.
pub fn predict(
    functions: &Eigenfunctions,
    transform: Option<&Transform>,
    stats: &SuffStats,
    state: &ModelState,
    x_star: &DMatrix<f64>,
) -> Result<Prediction> {
    let phi_star = functions.phi_at(x_star)?;
    let features = match transform {
        Some(t) => t.apply(&phi_star),
        None => phi_star,
    };
    predict_features(&features, stats, state)
}
