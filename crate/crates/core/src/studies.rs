//! Desk-scale experiments: kernel reconstruction error against p, PCG
//! iteration counts with and without the GRIEF preconditioner, and a 2D
//! regression demo against an exact GP.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::GriefBasis;
use crate::error::{GriefError, Result};
use crate::exact::{exact_predict, SeArdHypers};
use crate::inference::{init_hypers, optimize_type2, Type2Config};
use crate::kernels::ProductKernel;
use crate::model::{predict_features, precompute, ModelState};
use crate::precond::{pcg_solve, IdentityPreconditioner, PcgResult, WoodburyApplier};

/// Rows drawn iid from `U(-sqrt 3, sqrt 3)`, which has unit variance.
pub fn uniform_unit_variance(rng: &mut impl Rng, n: usize, d: usize) -> DMatrix<f64> {
    let a = 3f64.sqrt();
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-a..a))
}

pub fn relative_frobenius_error(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    (approx - exact).norm() / exact.norm()
}

/// Best achievable relative Frobenius error of a rank-`p` approximation,
/// from the eigenvalues of the exact matrix.
pub fn truncation_bound(eigenvalues: &[f64], p: usize) -> f64 {
    let mut sq: Vec<f64> = eigenvalues.iter().map(|l| l * l).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sq.iter().sum();
    let tail: f64 = sq.iter().skip(p).sum();
    (tail / total).sqrt()
}

/// `C K_SS⁺ Cᵀ` with `C = K[:, S]`, as a factor `F` with `F Fᵀ` the
/// approximation. Eigenvalues of `K_SS` below `1e-10 * max` are dropped.
pub fn subset_nystrom_factor(k: &DMatrix<f64>, subset: &[usize]) -> DMatrix<f64> {
    let c = k.select_columns(subset);
    let kss = c.select_rows(subset);
    let eig = kss.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * lmax)
        .collect();
    let mut v = eig.eigenvectors.select_columns(&keep);
    for (j, &i) in keep.iter().enumerate() {
        v.column_mut(j).unscale_mut(eig.eigenvalues[i].sqrt());
    }
    c * v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub mbar: usize,
    pub lengthscale: f64,
    pub ps: Vec<usize>,
    /// Random subsets averaged for the randomized Nyström baseline.
    pub seeds: usize,
    pub seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_test: 1000,
            d: 10,
            mbar: 20,
            lengthscale: 10f64.sqrt(),
            ps: vec![8, 32, 128, 512],
            seeds: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Train,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub p: usize,
    pub block: Block,
    pub grief: f64,
    pub randomized_mean: f64,
    pub randomized_std: f64,
    pub lower_bound: f64,
}

/// Relative Frobenius error of `Phi Phiᵀ` against the exact SE kernel on the
/// train-train block and the full train/test block, for GRIEF, randomized
/// Nyström on `p` uniformly drawn training points, and the best rank-`p`
/// approximation.
pub fn reconstruction_study(cfg: &ReconstructionConfig) -> Result<Vec<ReconstructionRow>> {
    let p_max = cfg.ps.iter().copied().max().ok_or_else(|| {
        GriefError::InvalidParameter("reconstruction sweep needs at least one p".into())
    })?;
    if p_max > cfg.n_train || cfg.seeds == 0 || cfg.n_train == 0 {
        return Err(GriefError::InvalidParameter(format!(
            "need 1 <= p <= n_train ({}) and at least one seed, got p = {p_max}, seeds = {}",
            cfg.n_train, cfg.seeds
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_train + cfg.n_test;
    let x = uniform_unit_variance(&mut rng, n, cfg.d);
    let x_train = x.rows(0, cfg.n_train).into_owned();
    let kernel = ProductKernel::se_ard(&vec![cfg.lengthscale; cfg.d], 1.0)?;
    let k_joint = kernel.gram(&x)?;
    let k_train = k_joint.view((0, 0), (cfg.n_train, cfg.n_train)).into_owned();
    let eig_train: Vec<f64> = k_train.clone().symmetric_eigenvalues().iter().copied().collect();
    let eig_joint: Vec<f64> = k_joint.clone().symmetric_eigenvalues().iter().copied().collect();

    let basis = GriefBasis::fit(&x_train, &kernel, &vec![cfg.mbar; cfg.d], p_max)?;
    let phi = basis.phi_at(&x)?;

    let errors = |f: &DMatrix<f64>| {
        let approx = f * f.transpose();
        let train = approx.view((0, 0), (cfg.n_train, cfg.n_train)).into_owned();
        (
            relative_frobenius_error(&train, &k_train),
            relative_frobenius_error(&approx, &k_joint),
        )
    };

    let perms: Vec<Vec<usize>> = (0..cfg.seeds)
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + s as u64));
            let mut idx: Vec<usize> = (0..cfg.n_train).collect();
            idx.shuffle(&mut r);
            idx
        })
        .collect();

    let mut rows = Vec::with_capacity(2 * cfg.ps.len());
    for &p in &cfg.ps {
        let (g_train, g_joint) = errors(&phi.columns(0, p).into_owned());
        let mut r_train = Vec::with_capacity(cfg.seeds);
        let mut r_joint = Vec::with_capacity(cfg.seeds);
        for perm in &perms {
            let (a, b) = errors(&subset_nystrom_factor(&k_joint, &perm[..p]));
            r_train.push(a);
            r_joint.push(b);
        }
        for (block, grief, rand, eig) in [
            (Block::Train, g_train, &r_train, &eig_train),
            (Block::Joint, g_joint, &r_joint, &eig_joint),
        ] {
            let mean = rand.iter().sum::<f64>() / rand.len() as f64;
            let std = (rand.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rand.len() as f64).sqrt();
            rows.push(ReconstructionRow {
                p,
                block,
                grief,
                randomized_mean: mean,
                randomized_std: std,
                lower_bound: truncation_bound(eig, p),
            });
        }
        log::info!("reconstruction p = {p}: grief train {g_train:.4e}, joint {g_joint:.4e}");
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecondConfig {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub mbar: usize,
    pub lengthscale: f64,
    pub sigma2: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub seeds: Vec<u64>,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 5,
            p: 200,
            mbar: 10,
            lengthscale: 1.0,
            sigma2: 1e-2,
            tol: 1e-8,
            max_iters: 10_000,
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecondRun {
    pub seed: u64,
    pub plain: PcgResult,
    pub preconditioned: PcgResult,
}

/// Solves `(K + sigma² I) x = b` for random inputs and right-hand sides with
/// plain CG and with the unit-weight GRIEF preconditioner.
pub fn precondition_study(cfg: &PrecondConfig) -> Result<Vec<PrecondRun>> {
    let kernel = ProductKernel::se_ard(&vec![cfg.lengthscale; cfg.d], 1.0)?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = uniform_unit_variance(&mut rng, cfg.n, cfg.d);
            let b = DVector::from_fn(cfg.n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let k = kernel.gram(&x)?;
            let basis = GriefBasis::fit(&x, &kernel, &vec![cfg.mbar; cfg.d], cfg.p)?;
            let applier = WoodburyApplier::new(basis.phi, &ModelState::unit(cfg.p, cfg.sigma2)?)?;
            let plain = pcg_solve(&k, cfg.sigma2, &IdentityPreconditioner, &b, cfg.tol, cfg.max_iters)?;
            let preconditioned = pcg_solve(&k, cfg.sigma2, &applier, &b, cfg.tol, cfg.max_iters)?;
            log::info!(
                "seed {seed}: plain {} iterations, preconditioned {}",
                plain.iterations,
                preconditioned.iterations
            );
            Ok(PrecondRun {
                seed,
                plain,
                preconditioned,
            })
        })
        .collect()
}

pub fn median_usize(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n_train: usize,
    /// Variance of the Gaussian observation noise.
    pub noise_var: f64,
    /// Inputs are drawn from `[-half_width, half_width]²`.
    pub half_width: f64,
    /// Test points per side of the regular test grid.
    pub test_side: usize,
    pub mbar: usize,
    pub p: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_train: 10,
            noise_var: 0.1,
            half_width: 3.0,
            test_side: 20,
            mbar: 5,
            p: 4,
            seed: 0,
        }
    }
}

pub struct DemoData {
    pub x_train: DMatrix<f64>,
    pub y_train: DVector<f64>,
    pub x_test: DMatrix<f64>,
    /// Noise-free `sin(x1) sin(x2)` on the test grid.
    pub f_test: DVector<f64>,
}

pub fn demo_target(x1: f64, x2: f64) -> f64 {
    x1.sin() * x2.sin()
}

pub fn demo_data(cfg: &DemoConfig) -> DemoData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.half_width;
    let x_train = DMatrix::from_fn(cfg.n_train, 2, |_, _| rng.random_range(-h..h));
    let sd = cfg.noise_var.sqrt();
    let y_train = DVector::from_fn(cfg.n_train, |i, _| {
        demo_target(x_train[(i, 0)], x_train[(i, 1)]) + sd * rng.sample::<f64, _>(StandardNormal)
    });
    let s = cfg.test_side;
    let coord = |k: usize| -h + 2.0 * h * k as f64 / (s - 1) as f64;
    let x_test = DMatrix::from_fn(s * s, 2, |r, c| if c == 0 { coord(r / s) } else { coord(r % s) });
    let f_test = DVector::from_fn(s * s, |r, _| demo_target(x_test[(r, 0)], x_test[(r, 1)]));
    DemoData {
        x_train,
        y_train,
        x_test,
        f_test,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoResult {
    pub exact_rmse: f64,
    pub grief_rmse: f64,
    pub exact_hypers: SeArdHypers,
    pub grief_hypers: SeArdHypers,
}

pub fn rmse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// Exact GP and GRIEF-II (unit weights), both with hyperparameters chosen by
/// marginal likelihood maximization; RMSE against the noise-free test surface.
pub fn demo_2d(cfg: &DemoConfig) -> Result<DemoResult> {
    let data = demo_data(cfg);
    let init = init_hypers(&data.x_train, &data.y_train, cfg.seed)?;
    let exact = exact_predict(&data.x_train, &data.y_train, &init.hypers, &data.x_test)?;
    let mut t2 = Type2Config::new(vec![cfg.mbar; 2], cfg.p);
    t2.seed = cfg.seed;
    let fit = optimize_type2(&data.x_train, &data.y_train, &init.hypers, &t2)?;
    let stats = precompute(&fit.basis.phi, &data.y_train)?;
    let state = ModelState::unit(fit.basis.p(), fit.hypers.sigma2)?;
    let grief = predict_features(&fit.basis.phi_at(&data.x_test)?, &stats, &state)?;
    Ok(DemoResult {
        exact_rmse: rmse(&exact.mean, &data.f_test),
        grief_rmse: rmse(&grief.mean, &data.f_test),
        exact_hypers: init.hypers,
        grief_hypers: fit.hypers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_bound_cases() {
        assert_eq!(truncation_bound(&[3.0, 4.0], 0), 1.0);
        assert_eq!(truncation_bound(&[3.0, 4.0], 2), 0.0);
        assert!((truncation_bound(&[3.0, 4.0], 1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn full_subset_nystrom_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = uniform_unit_variance(&mut rng, 12, 2);
        let k = ProductKernel::se_ard(&[0.5, 0.5], 1.0).unwrap().gram(&x).unwrap();
        let idx: Vec<usize> = (0..12).collect();
        let f = subset_nystrom_factor(&k, &idx);
        assert!(relative_frobenius_error(&(&f * f.transpose()), &k) < 1e-8);
    }

    #[test]
    fn demo_data_shapes() {
        let d = demo_data(&DemoConfig::default());
        assert_eq!(d.x_train.shape(), (10, 2));
        assert_eq!(d.x_test.shape(), (400, 2));
        assert_eq!(d.f_test[0], demo_target(-3.0, -3.0));
    }

    #[test]
    fn median_of_counts() {
        assert_eq!(median_usize(&[5, 1, 3]), 3.0);
        assert_eq!(median_usize(&[4, 1, 3, 2]), 2.5);
    }
}
