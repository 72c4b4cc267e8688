//! One-dimensional base kernels and their product composition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GriefError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
}

/// A stationary kernel on one input coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseKernel1D {
    pub family: KernelFamily,
    lengthscale: f64,
    amplitude: f64,
}

impl BaseKernel1D {
    pub fn new(family: KernelFamily, lengthscale: f64, amplitude: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "amplitude must be positive and finite, got {amplitude}"
            )));
        }
        Ok(Self {
            family,
            lengthscale,
            amplitude,
        })
    }

    pub fn squared_exponential(lengthscale: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscale, amplitude)
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let r = (a - b) / self.lengthscale;
                self.amplitude * (-0.5 * r * r).exp()
            }
        }
    }

    /// `n x m̄` matrix of kernel values between `xs` and `us`.
    pub fn cross_cov(&self, xs: &[f64], us: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), us.len(), |j, l| self.eval(xs[j], us[l]))
    }
}

/// `k(x, z) = prod_i k_i(x_i, z_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductKernel {
    dims: Vec<BaseKernel1D>,
}

impl ProductKernel {
    pub fn new(dims: Vec<BaseKernel1D>) -> Result<Self> {
        if dims.is_empty() {
            return Err(GriefError::InvalidParameter(
                "product kernel needs at least one dimension".into(),
            ));
        }
        Ok(Self { dims })
    }

    /// SE-ARD kernel with total signal variance `variance`, split evenly as
    /// `variance^(1/d)` per factor.
    pub fn se_ard(lengthscales: &[f64], variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "signal variance must be positive and finite, got {variance}"
            )));
        }
        let amp = variance.powf(1.0 / lengthscales.len().max(1) as f64);
        let dims = lengthscales
            .iter()
            .map(|&l| BaseKernel1D::squared_exponential(l, amp))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[BaseKernel1D] {
        &self.dims
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.dims.iter().map(BaseKernel1D::lengthscale).collect()
    }

    /// Total signal variance `prod_i amplitude_i`.
    pub fn variance(&self) -> f64 {
        self.dims.iter().map(BaseKernel1D::amplitude).product()
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != self.ndims() || z.len() != self.ndims() {
            return Err(GriefError::DimensionMismatch(format!(
                "kernel has {} dimensions, points have {} and {}",
                self.ndims(),
                x.len(),
                z.len()
            )));
        }
        Ok(self.eval_unchecked(x.iter().copied(), z.iter().copied()))
    }

    fn eval_unchecked(
        &self,
        x: impl Iterator<Item = f64>,
        z: impl Iterator<Item = f64>,
    ) -> f64 {
        self.dims
            .iter()
            .zip(x.zip(z))
            .fold(1.0, |acc, (k, (a, b))| acc * k.eval(a, b))
    }

    /// Dense cross-covariance between the rows of `a` and the rows of `b`.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != self.ndims() || b.ncols() != self.ndims() {
            return Err(GriefError::DimensionMismatch(format!(
                "kernel has {} dimensions, inputs have {} and {} columns",
                self.ndims(),
                a.ncols(),
                b.ncols()
            )));
        }
        // Accumulate per dimension so each entry is the same left-to-right
        // product as `eval`.
        let mut out = DMatrix::from_element(a.nrows(), b.nrows(), 1.0);
        for (i, k) in self.dims.iter().enumerate() {
            let xa = a.column(i);
            let xb = b.column(i);
            for c in 0..b.nrows() {
                for r in 0..a.nrows() {
                    out[(r, c)] *= k.eval(xa[r], xb[c]);
                }
            }
        }
        Ok(out)
    }

    pub fn gram(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.cross(x, x)
    }
}
