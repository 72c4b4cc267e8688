//! Dense exact GP with an SE-ARD kernel: log marginal likelihood, analytic
//! gradients in log-parameters, and posterior prediction. Cubic in `n`; used
//! for hyperparameter initialization and as a reference model.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GriefError, Result};
use crate::kernels::ProductKernel;
use crate::model::Prediction;

/// SE-ARD hyperparameters plus the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SeArdHypers {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    pub sigma2: f64,
}

impl SeArdHypers {
    pub fn kernel(&self) -> Result<ProductKernel> {
        ProductKernel::se_ard(&self.lengthscales, self.variance)
    }

    /// `[log l_1, .., log l_d, log variance, log sigma²]`
    pub fn to_log(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.lengthscales.len() + 2,
            self.lengthscales
                .iter()
                .chain([self.variance, self.sigma2].iter())
                .map(|v| v.ln()),
        )
    }

    pub fn from_log(v: &DVector<f64>) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v.rows(0, d).iter().map(|l| l.exp()).collect(),
            variance: v[d].exp(),
            sigma2: v[d + 1].exp(),
        }
    }
}

fn factor(x: &DMatrix<f64>, h: &SeArdHypers) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    if x.ncols() != h.lengthscales.len() {
        return Err(GriefError::DimensionMismatch(format!(
            "inputs have {} columns, {} lengthscales given",
            x.ncols(),
            h.lengthscales.len()
        )));
    }
    if !(h.sigma2 > 0.0 && h.sigma2.is_finite()) {
        return Err(GriefError::InvalidParameter(format!(
            "noise variance must be positive and finite, got {}",
            h.sigma2
        )));
    }
    let kf = h.kernel()?.gram(x)?;
    let mut ky = kf.clone();
    for i in 0..ky.nrows() {
        ky[(i, i)] += h.sigma2;
    }
    let chol = Cholesky::new(ky)
        .ok_or_else(|| GriefError::NotPositiveDefinite("exact kernel matrix K + sigma² I".into()))?;
    Ok((kf, chol))
}

fn lml_value(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * y.dot(alpha) - log_det - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

pub fn exact_lml(x: &DMatrix<f64>, y: &DVector<f64>, h: &SeArdHypers) -> Result<f64> {
    let (_, chol) = factor(x, h)?;
    let alpha = chol.solve(y);
    Ok(lml_value(&chol, y, &alpha))
}

/// Value and gradient with respect to [`SeArdHypers::to_log`] coordinates.
pub fn exact_lml_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &SeArdHypers,
) -> Result<(f64, DVector<f64>)> {
    let (kf, chol) = factor(x, h)?;
    let alpha = chol.solve(y);
    let value = lml_value(&chol, y, &alpha);
    let n = x.nrows();
    let d = x.ncols();
    // Q = alpha alphaᵀ - K⁻¹; dLML/dt = tr(Q dK/dt) / 2.
    let mut q = alpha.clone() * alpha.transpose();
    q -= chol.inverse();
    let mut grad = DVector::zeros(d + 2);
    for j in 0..n {
        for k in 0..n {
            let qk = q[(j, k)] * kf[(j, k)];
            grad[d] += qk;
            for i in 0..d {
                let r = (x[(j, i)] - x[(k, i)]) / h.lengthscales[i];
                grad[i] += qk * r * r;
            }
        }
    }
    grad[d + 1] = h.sigma2 * q.trace();
    grad *= 0.5;
    Ok((value, grad))
}

pub fn exact_predict(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &SeArdHypers,
    x_star: &DMatrix<f64>,
) -> Result<Prediction> {
    let (_, chol) = factor(x, h)?;
    let kernel = h.kernel()?;
    let ks = kernel.cross(x_star, x)?;
    let mean = &ks * chol.solve(y);
    let mut v = ks.transpose();
    chol.l_dirty().solve_lower_triangular_mut(&mut v);
    let var = DVector::from_iterator(
        x_star.nrows(),
        v.column_iter()
            .map(|c| (kernel.variance() - c.norm_squared()).max(0.0) + h.sigma2),
    );
    Ok(Prediction { mean, var })
}
