//! Inducing grid, per-dimension eigendecompositions and the scaled
//! eigenfunction matrix `Phi`.
//!
//! Column `j` of `Phi` is `phi_j(x) = lambda_j^(-1/2) K_{x,U} q_j`, where
//! `(lambda_j, q_j)` is the `j`-th largest eigenpair of the grid covariance
//! `K_UU = ⊗_i K_UU^(i)`. Neither `K_UU` nor `K_XU` is ever expanded.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GriefError, Result};
use crate::kernels::{BaseKernel1D, ProductKernel};
use crate::tensor::{
    hadamard_log, kr_q_select_log, top_p_kron_eigs, ColumnGather, KronMatrix, RowKhatriRao,
    Selection,
};

/// Relative floor applied to per-dimension eigenvalues before storage.
pub const EIG_CLAMP: f64 = 1e-12;
/// Range margin added on each side of a quantile axis.
pub const GRID_MARGIN: f64 = 0.05;
const DUPLICATE_SHIFT: f64 = 1e-8;

/// Cartesian product grid `U = axis_1 x ... x axis_d`, never expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInducing {
    axes: Vec<Vec<f64>>,
    /// Dimensions whose input column had zero range.
    #[serde(default)]
    constant_dims: Vec<usize>,
}

impl GridInducing {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(GriefError::InvalidParameter("grid needs at least one axis".into()));
        }
        for (i, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(GriefError::InvalidParameter(format!("axis {i} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GriefError::InvalidParameter(format!(
                    "axis {i} must be finite and strictly increasing"
                )));
            }
        }
        Ok(Self {
            axes,
            constant_dims: Vec::new(),
        })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn ndims(&self) -> usize {
        self.axes.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Natural log of the number of inducing points.
    pub fn log_size(&self) -> f64 {
        self.axes.iter().map(|a| (a.len() as f64).ln()).sum()
    }

    pub fn log10_size(&self) -> f64 {
        self.log_size() / std::f64::consts::LN_10
    }

    pub fn constant_dims(&self) -> &[usize] {
        &self.constant_dims
    }

    /// Records which dimensions came from zero-range input columns.
    pub fn with_constant_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = dims.iter().find(|&&i| i >= self.axes.len()) {
            return Err(GriefError::InvalidParameter(format!(
                "constant dimension {bad} of a {}-dimensional grid",
                self.axes.len()
            )));
        }
        self.constant_dims = dims;
        Ok(self)
    }
}

/// Type-7 empirical quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Axis of `mbar` points at equally spaced empirical quantiles of `column`,
/// stretched by [`GRID_MARGIN`] of the range on each side. Returns `None` for a
/// constant column.
pub(crate) fn quantile_axis(column: &[f64], mbar: usize) -> Option<Vec<f64>> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let range = hi - lo;
    if range <= 0.0 {
        return None;
    }
    let mut axis: Vec<f64> = (0..mbar)
        .map(|k| {
            let q = quantile_sorted(&sorted, k as f64 / (mbar - 1) as f64);
            lo - GRID_MARGIN * range + (q - lo) * (1.0 + 2.0 * GRID_MARGIN)
        })
        .collect();
    for k in 1..axis.len() {
        if axis[k] <= axis[k - 1] {
            axis[k] = axis[k - 1] + DUPLICATE_SHIFT * range;
        }
    }
    Some(axis)
}

/// Places `mbar[i]` inducing coordinates along each input dimension at the
/// empirical quantiles of the data.
///
/// A constant column gets an evenly spaced axis on `[c - 1, c + 1]` and is
/// recorded in [`GridInducing::constant_dims`].
pub fn build_grid(x: &DMatrix<f64>, mbar: &[usize]) -> Result<GridInducing> {
    if x.nrows() < 2 {
        return Err(GriefError::InvalidParameter(format!(
            "grid placement needs at least 2 points, got {}",
            x.nrows()
        )));
    }
    if mbar.len() != x.ncols() {
        return Err(GriefError::DimensionMismatch(format!(
            "{} per-dimension grid sizes for {} input columns",
            mbar.len(),
            x.ncols()
        )));
    }
    if let Some(&bad) = mbar.iter().find(|&&m| m < 2) {
        return Err(GriefError::InvalidParameter(format!(
            "grid size per dimension must be at least 2, got {bad}"
        )));
    }
    let mut axes = Vec::with_capacity(mbar.len());
    let mut constant_dims = Vec::new();
    for (i, &m) in mbar.iter().enumerate() {
        let column: Vec<f64> = x.column(i).iter().copied().collect();
        if column.iter().any(|v| !v.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "input column {i} has non-finite values"
            )));
        }
        match quantile_axis(&column, m) {
            Some(axis) => axes.push(axis),
            None => {
                log::warn!("input column {i} is constant; using a unit axis around it");
                let c = column[0];
                axes.push(
                    (0..m)
                        .map(|k| c - 1.0 + 2.0 * k as f64 / (m - 1) as f64)
                        .collect(),
                );
                constant_dims.push(i);
            }
        }
    }
    Ok(GridInducing {
        axes,
        constant_dims,
    })
}

/// Eigendecomposition of every per-dimension grid covariance, eigenvalues in
/// descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct KronEig {
    pub q_factors: Vec<DMatrix<f64>>,
    pub lambda_factors: Vec<Vec<f64>>,
}

impl KronEig {
    pub fn q(&self) -> Result<KronMatrix> {
        KronMatrix::new(self.q_factors.clone())
    }
}

fn sorted_eigen(m: DMatrix<f64>, dim: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or(GriefError::EigenFailure { dim })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = eig.eigenvectors.select_columns(&order);
    if vecs.iter().any(|v| !v.is_finite()) {
        return Err(GriefError::EigenFailure { dim });
    }
    Ok((vecs, vals))
}

/// Per-dimension symmetric eigendecompositions of `K_UU^(i)`, with
/// eigenvalues clamped below at `EIG_CLAMP * max`.
pub fn decompose(grid: &GridInducing, kernel: &ProductKernel) -> Result<KronEig> {
    if grid.ndims() != kernel.ndims() {
        return Err(GriefError::DimensionMismatch(format!(
            "grid has {} dimensions, kernel has {}",
            grid.ndims(),
            kernel.ndims()
        )));
    }
    let mut q_factors = Vec::with_capacity(grid.ndims());
    let mut lambda_factors = Vec::with_capacity(grid.ndims());
    for (dim, (axis, k)) in grid.axes().iter().zip(kernel.dims()).enumerate() {
        let (q, mut lam) = sorted_eigen(k.cross_cov(axis, axis), dim)?;
        let floor = EIG_CLAMP * lam[0];
        for l in &mut lam {
            *l = l.max(floor);
        }
        q_factors.push(q);
        lambda_factors.push(lam);
    }
    Ok(KronEig {
        q_factors,
        lambda_factors,
    })
}

/// Everything needed to evaluate the selected eigenfunctions at new inputs:
/// the grid, the base kernel, the selection and only the eigenvector columns
/// it references.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunctions {
    grid: GridInducing,
    kernel: ProductKernel,
    selection: Selection,
    /// Per dimension, the `m̄_i x c_i` referenced columns of `Q^(i)`.
    columns: Vec<DMatrix<f64>>,
    /// Per dimension, position of each selected entry among `columns[i]`.
    locals: Vec<Vec<usize>>,
}

impl Eigenfunctions {
    /// Reassembles an evaluator from stored parts; `columns[i]` must hold the
    /// distinct referenced columns of `Q^(i)` in ascending index order.
    pub fn from_parts(
        grid: GridInducing,
        kernel: ProductKernel,
        selection: Selection,
        columns: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let d = grid.ndims();
        if kernel.ndims() != d || selection.ndims() != d || columns.len() != d {
            return Err(GriefError::DimensionMismatch(
                "grid, kernel, selection and columns disagree on dimensionality".into(),
            ));
        }
        selection.check_bounds(&grid.sizes())?;
        let mut locals = Vec::with_capacity(d);
        for (dim, c) in columns.iter().enumerate() {
            let gather = ColumnGather::from_selection(&selection, dim);
            if c.nrows() != grid.sizes()[dim] || c.ncols() != gather.columns.len() {
                return Err(GriefError::DimensionMismatch(format!(
                    "stored columns for dimension {dim} are {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    grid.sizes()[dim],
                    gather.columns.len()
                )));
            }
            locals.push(gather.local);
        }
        Ok(Self {
            grid,
            kernel,
            selection,
            columns,
            locals,
        })
    }

    fn from_eig(
        grid: GridInducing,
        kernel: ProductKernel,
        selection: Selection,
        eig: &KronEig,
    ) -> Self {
        let mut columns = Vec::with_capacity(grid.ndims());
        let mut locals = Vec::with_capacity(grid.ndims());
        for (dim, q) in eig.q_factors.iter().enumerate() {
            let gather = ColumnGather::from_selection(&selection, dim);
            columns.push(q.select_columns(&gather.columns));
            locals.push(gather.local);
        }
        Self {
            grid,
            kernel,
            selection,
            columns,
            locals,
        }
    }

    pub fn grid(&self) -> &GridInducing {
        &self.grid
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn columns(&self) -> &[DMatrix<f64>] {
        &self.columns
    }

    pub fn p(&self) -> usize {
        self.selection.len()
    }

    pub fn ndims(&self) -> usize {
        self.grid.ndims()
    }

    /// Scaled eigenfunctions evaluated at the rows of `x`.
    pub fn phi_at(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.ndims() {
            return Err(GriefError::DimensionMismatch(format!(
                "inputs have {} columns, model expects d = {}",
                x.ncols(),
                self.ndims()
            )));
        }
        let xs: Vec<Vec<f64>> = (0..x.ncols()).map(|i| x.column(i).iter().copied().collect()).collect();
        let blocks: Vec<DMatrix<f64>> = self
            .kernel
            .dims()
            .iter()
            .zip(self.grid.axes())
            .zip(&self.columns)
            .zip(&xs)
            .map(|(((k, axis), cols), xi)| k.cross_cov(xi, axis) * cols)
            .collect();
        let scale: Vec<f64> = self.selection.log_values().iter().map(|l| -0.5 * l).collect();
        hadamard_log(&blocks, &self.locals, &scale)
    }
}

/// Eigenfunction evaluator together with `Phi` on the training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GriefBasis {
    pub functions: Eigenfunctions,
    pub phi: DMatrix<f64>,
}

impl GriefBasis {
    /// Grid placement, decomposition and `Phi` in one call.
    pub fn fit(x: &DMatrix<f64>, kernel: &ProductKernel, mbar: &[usize], p: usize) -> Result<Self> {
        let grid = build_grid(x, mbar)?;
        let eig = decompose(&grid, kernel)?;
        build_phi(x, grid, kernel, &eig, p)
    }

    pub fn p(&self) -> usize {
        self.functions.p()
    }

    pub fn selection(&self) -> &Selection {
        self.functions.selection()
    }

    pub fn phi_at(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.functions.phi_at(x)
    }
}

/// Selects the top `p` Kronecker eigenpairs and evaluates the scaled
/// eigenfunctions on `x` through the log-domain Hadamard contraction.
pub fn build_phi(
    x: &DMatrix<f64>,
    grid: GridInducing,
    kernel: &ProductKernel,
    eig: &KronEig,
    p: usize,
) -> Result<GriefBasis> {
    let d = grid.ndims();
    if x.ncols() != d || kernel.ndims() != d || eig.q_factors.len() != d {
        return Err(GriefError::DimensionMismatch(format!(
            "inputs have {} columns, grid {d}, kernel {}, decomposition {}",
            x.ncols(),
            kernel.ndims(),
            eig.q_factors.len()
        )));
    }
    let selection = top_p_kron_eigs(&eig.lambda_factors, p)?;
    let kr = RowKhatriRao::new(
        kernel
            .dims()
            .iter()
            .zip(grid.axes())
            .enumerate()
            .map(|(i, (k, axis))| {
                let xi: Vec<f64> = x.column(i).iter().copied().collect();
                k.cross_cov(&xi, axis)
            })
            .collect(),
    )?;
    let scale: Vec<f64> = selection.log_values().iter().map(|l| -0.5 * l).collect();
    let phi = kr_q_select_log(&kr, &eig.q()?, &selection, &scale)?;
    let functions = Eigenfunctions::from_eig(grid, kernel.clone(), selection, eig);
    Ok(GriefBasis { functions, phi })
}

fn top_eigvec(m: DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let (vecs, vals) = sorted_eigen(m, 0)?;
    Ok((vals[0], vecs.column(0).into_owned()))
}

/// Angle between two vectors as lines through the origin, accurate for small
/// angles.
fn line_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let a = a.normalize();
    let b = b.normalize();
    let dot = a.dot(&b);
    let perp = (&a - &b * dot).norm();
    perp.atan2(dot.abs())
}

/// Angle between the top Nyström eigenfunction computed from inducing points
/// `axis` and evaluated on `x`, and the top eigenvector of the dense `K_XX`.
pub fn nystrom_angle(x: &[f64], kernel: &BaseKernel1D, axis: &[f64]) -> Result<f64> {
    let (_, q_ref) = top_eigvec(kernel.cross_cov(x, x))?;
    let (lam, q) = top_eigvec(kernel.cross_cov(axis, axis))?;
    let scale = (axis.len() as f64 / x.len() as f64).sqrt() / lam;
    let approx = kernel.cross_cov(x, axis) * q * scale;
    Ok(line_angle(&approx, &q_ref))
}

/// For each grid size in `schedule`, places a quantile axis of that size,
/// inserts the training coordinates so that `U ⊇ X`, and reports the
/// [`nystrom_angle`] against the dense training eigenvector.
pub fn convergence_probe(x: &[f64], kernel: &BaseKernel1D, schedule: &[usize]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(GriefError::InvalidParameter("probe needs at least 2 points".into()));
    }
    schedule
        .iter()
        .map(|&mbar| {
            if mbar < 2 {
                return Err(GriefError::InvalidParameter(format!(
                    "grid size must be at least 2, got {mbar}"
                )));
            }
            let mut axis = quantile_axis(x, mbar).ok_or_else(|| {
                GriefError::InvalidParameter("probe inputs have zero range".into())
            })?;
            axis.extend_from_slice(x);
            axis.sort_by(f64::total_cmp);
            axis.dedup();
            nystrom_angle(x, kernel, &axis)
        })
        .collect()
}
