//! Hyperparameter inference: exact-GP initialization, type-II maximization of
//! the GRIEF marginal likelihood over base-kernel parameters, and type-I MALA
//! sampling of the weights and noise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{build_grid, build_phi, decompose, Eigenfunctions, GriefBasis, GridInducing};
use crate::error::{GriefError, Result};
use crate::exact::{exact_lml_grad, SeArdHypers};
use crate::model::{
    lml, lml_and_grads, lml_fast, precompute, predict_features, LmlEval, ModelState, Prediction,
    SuffStats, Transform,
};
use crate::optim::{maximize, OptimConfig, OptimReport};

/// Maximum number of points used by [`init_hypers`].
pub const INIT_SUBSAMPLE: usize = 1000;

/// Log-normal prior specified by the mode and variance of the positive
/// quantity itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mode: f64,
    pub variance: f64,
    mu_ln: f64,
    s2_ln: f64,
}

impl Prior {
    /// With `t = exp(s²)`, mode `M` and variance `V` satisfy
    /// `t⁴ - t³ = V / M²`, which has exactly one root `t > 1`.
    pub fn log_normal(mode: f64, variance: f64) -> Result<Self> {
        if !(mode > 0.0 && mode.is_finite() && variance > 0.0 && variance.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "log-normal prior needs positive finite mode and variance, got {mode} and {variance}"
            )));
        }
        let c = variance / (mode * mode);
        // f(t) = t⁴ - t³ is increasing and convex on t > 1, so Newton from
        // the right converges monotonically.
        let mut t = 2.0 + c.powf(0.25);
        for _ in 0..200 {
            let f = t * t * t * (t - 1.0) - c;
            let df = t * t * (4.0 * t - 3.0);
            let next = t - f / df;
            if !(next < t) || next <= 1.0 {
                break;
            }
            t = next;
        }
        let s2_ln = t.ln();
        if !(s2_ln > 0.0 && s2_ln.is_finite()) {
            return Err(GriefError::InvalidParameter(format!(
                "no log-normal with mode {mode} and variance {variance}"
            )));
        }
        Ok(Self {
            mode,
            variance,
            mu_ln: mode.ln() + s2_ln,
            s2_ln,
        })
    }

    /// Location and scale² of the underlying normal in log space.
    pub fn log_params(&self) -> (f64, f64) {
        (self.mu_ln, self.s2_ln)
    }

    /// Mode and variance implied by the log-space parameters.
    pub fn implied_moments(&self) -> (f64, f64) {
        let mode = (self.mu_ln - self.s2_ln).exp();
        let var = self.s2_ln.exp_m1() * (2.0 * self.mu_ln + self.s2_ln).exp();
        (mode, var)
    }

    /// Log density of `v = log x` (includes the Jacobian) and its derivative.
    pub fn log_density_log(&self, v: f64) -> (f64, f64) {
        let dv = v - self.mu_ln;
        (
            -0.5 * dv * dv / self.s2_ln - 0.5 * (2.0 * PI * self.s2_ln).ln(),
            -dv / self.s2_ln,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub step_size: f64,
    pub adapt_target: f64,
    pub adapt: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            total_iters: 10_000,
            burn_in: 1000,
            thin: 50,
            step_size: 0.1,
            adapt_target: 0.574,
            adapt: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.burn_in >= self.total_iters {
            problems.push(format!(
                "burn_in ({}) must be below total_iters ({})",
                self.burn_in, self.total_iters
            ));
        }
        if self.thin == 0 {
            problems.push("thin must be at least 1".to_string());
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            problems.push(format!("step_size must be positive, got {}", self.step_size));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            problems.push(format!("adapt_target must lie in (0, 1), got {}", self.adapt_target));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GriefError::InvalidParameter(problems.join("; ")))
        }
    }

    /// Number of draws retained after burn-in and thinning.
    pub fn retained(&self) -> usize {
        if self.burn_in >= self.total_iters || self.thin == 0 {
            return 0;
        }
        (self.total_iters - self.burn_in).div_ceil(self.thin)
    }
}

/// Unnormalized log density with gradient.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn eval(&self, v: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<DVector<f64>>,
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    /// Log density of the chain state after every iteration.
    pub log_density_trace: Vec<f64>,
    /// Step size used after burn-in.
    pub step_size: f64,
}

fn valid(value: f64, grad: &DVector<f64>) -> bool {
    value.is_finite() && grad.iter().all(|g| g.is_finite())
}

/// Metropolis-adjusted Langevin sampler.
///
/// Proposal `v' = v + (eps²/2) ∇log π(v) + eps z`. During burn-in `log eps`
/// follows a Robbins-Monro recursion toward `cfg.adapt_target`; afterwards it
/// is frozen. Iteration `i` is retained when `i >= burn_in` and
/// `(i - burn_in) % thin == 0`.
pub fn mala<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    v0: DVector<f64>,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<Chain> {
    cfg.validate()?;
    if v0.len() != target.dim() {
        return Err(GriefError::DimensionMismatch(format!(
            "start has {} entries, target has dimension {}",
            v0.len(),
            target.dim()
        )));
    }
    let (mut lp, mut grad) = target.eval(&v0)?;
    if !valid(lp, &grad) {
        return Err(GriefError::InvalidParameter(
            "log density is not finite at the chain start".into(),
        ));
    }
    let dim = v0.len();
    let mut v = v0;
    let mut log_eps = cfg.step_size.ln();
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(cfg.retained());
    let mut trace = Vec::with_capacity(cfg.total_iters);

    for i in 0..cfg.total_iters {
        let eps = log_eps.exp();
        let half = 0.5 * eps * eps;
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prop = &v + &grad * half + &z * eps;
        let u: f64 = rng.random();
        let mut accept_prob = 0.0;
        match target.eval(&prop) {
            Ok((lp_new, grad_new)) if valid(lp_new, &grad_new) => {
                let back = &v - &prop - &grad_new * half;
                let log_q_back = -back.norm_squared() / (4.0 * half);
                let log_q_fwd = -0.5 * z.norm_squared();
                let log_alpha = lp_new - lp + log_q_back - log_q_fwd;
                accept_prob = log_alpha.min(0.0).exp();
                if u.ln() < log_alpha {
                    v = prop;
                    lp = lp_new;
                    grad = grad_new;
                    if i >= cfg.burn_in {
                        accepted += 1;
                    }
                }
            }
            _ => {
                log::debug!("non-finite log density at proposal {i}; halving step size");
                log_eps -= std::f64::consts::LN_2;
            }
        }
        if cfg.adapt && i < cfg.burn_in {
            let gain = 1.0 / ((i + 1) as f64).powf(0.6);
            log_eps += gain * (accept_prob - cfg.adapt_target);
        }
        trace.push(lp);
        if i >= cfg.burn_in && (i - cfg.burn_in).is_multiple_of(cfg.thin) {
            draws.push(v.clone());
        }
    }
    Ok(Chain {
        draws,
        acceptance_rate: accepted as f64 / (cfg.total_iters - cfg.burn_in) as f64,
        log_density_trace: trace,
        step_size: log_eps.exp(),
    })
}

/// Posterior over `v = (log w, log sigma²)` for fixed statistics.
pub struct GpPosterior<'a> {
    pub stats: &'a SuffStats,
    pub w_prior: Prior,
    pub sigma2_prior: Prior,
}

impl LogDensity for GpPosterior<'_> {
    fn dim(&self) -> usize {
        self.stats.p() + 1
    }

    fn eval(&self, v: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let p = self.stats.p();
        let state = ModelState::new(v.rows(0, p).map(f64::exp), v[p].exp())?;
        let LmlEval { value, dw, dsigma2 } = if self.stats.is_orthogonal() {
            lml_fast(self.stats, &state)?
        } else {
            lml_and_grads(self.stats, &state)?
        };
        let mut lp = value;
        let mut grad = DVector::zeros(p + 1);
        for i in 0..p {
            let (l, g) = self.w_prior.log_density_log(v[i]);
            lp += l;
            grad[i] = dw[i] * state.w[i] + g;
        }
        let (l, g) = self.sigma2_prior.log_density_log(v[p]);
        lp += l;
        grad[p] = dsigma2 * state.sigma2 + g;
        Ok((lp, grad))
    }
}

/// Retained posterior draws of `(w, sigma²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub draws: Vec<ModelState>,
    pub acceptance_rate: f64,
    pub log_posterior_trace: Vec<f64>,
    pub step_size: f64,
}

/// MALA over the weights and noise, started at the prior modes.
pub fn mala_sample(
    stats: &SuffStats,
    w_prior: Prior,
    sigma2_prior: Prior,
    cfg: &ChainConfig,
    seed: u64,
) -> Result<SampleSet> {
    let target = GpPosterior {
        stats,
        w_prior,
        sigma2_prior,
    };
    let p = stats.p();
    let mut v0 = DVector::from_element(p + 1, w_prior.mode.ln());
    v0[p] = sigma2_prior.mode.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = mala(&target, v0, cfg, &mut rng)?;
    let draws = chain
        .draws
        .iter()
        .map(|v| ModelState::new(v.rows(0, p).map(f64::exp), v[p].exp()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet {
        draws,
        acceptance_rate: chain.acceptance_rate,
        log_posterior_trace: chain.log_density_trace,
        step_size: chain.step_size,
    })
}

/// Posterior predictive averaged over draws: the mean of the per-draw means,
/// and the per-draw variances plus the spread of the means.
pub fn predict_type1_features(
    phi_star: &DMatrix<f64>,
    stats: &SuffStats,
    samples: &SampleSet,
) -> Result<Prediction> {
    if samples.draws.is_empty() {
        return Err(GriefError::InvalidParameter("sample set is empty".into()));
    }
    let preds = samples
        .draws
        .iter()
        .map(|s| predict_features(phi_star, stats, s))
        .collect::<Result<Vec<_>>>()?;
    let k = preds.len() as f64;
    let n = phi_star.nrows();
    let mut mean = DVector::zeros(n);
    for pr in &preds {
        mean += &pr.mean;
    }
    mean /= k;
    let mut var = DVector::zeros(n);
    for pr in &preds {
        let dev = &pr.mean - &mean;
        var += &pr.var + dev.component_mul(&dev);
    }
    var /= k;
    Ok(Prediction { mean, var })
}

pub fn predict_type1(
    functions: &Eigenfunctions,
    transform: Option<&Transform>,
    stats: &SuffStats,
    samples: &SampleSet,
    x_star: &DMatrix<f64>,
) -> Result<Prediction> {
    let phi_star = functions.phi_at(x_star)?;
    let features = match transform {
        Some(t) => t.apply(&phi_star),
        None => phi_star,
    };
    predict_type1_features(&features, stats, samples)
}

fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-dimension median pairwise distance over at most 200 rows, or 1 for
/// constant columns.
pub fn median_heuristic(x: &DMatrix<f64>) -> Vec<f64> {
    let m = x.nrows().min(200);
    (0..x.ncols())
        .map(|i| {
            let mut dists = Vec::with_capacity(m * (m - 1) / 2);
            for a in 0..m {
                for b in a + 1..m {
                    dists.push((x[(a, i)] - x[(b, i)]).abs());
                }
            }
            let med = if dists.is_empty() { 0.0 } else { median(dists) };
            if med > 0.0 && med.is_finite() {
                med
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub hypers: SeArdHypers,
    /// Rows of the subsample the exact GP was fitted on.
    pub indices: Vec<usize>,
    pub lml: f64,
    /// Set when every start failed and the heuristic values were returned.
    pub fallback: bool,
}

/// Sorted row indices of the seeded subsample used by [`init_hypers`]: all
/// rows when `n <= INIT_SUBSAMPLE`, else `INIT_SUBSAMPLE` drawn without
/// replacement.
pub fn init_subsample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, n.min(INIT_SUBSAMPLE)).into_vec();
    indices.sort_unstable();
    indices
}

/// Fits an exact SE-ARD GP on a random subsample of at most
/// [`INIT_SUBSAMPLE`] rows, from several starting lengthscale scalings.
pub fn init_hypers(x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<InitReport> {
    let n = x.nrows();
    if n < 2 || y.len() != n {
        return Err(GriefError::InvalidParameter(format!(
            "initialization needs at least 2 rows and matching targets, got {n} rows and {} targets",
            y.len()
        )));
    }
    let indices = init_subsample(n, seed);
    let xs = x.select_rows(&indices);
    let ys = y.select_rows(&indices);

    let var_y = variance(ys.iter().copied());
    let floor = 1e-8 * var_y + 1e-12;
    let scale = if var_y > 0.0 { var_y } else { 1.0 };
    let heur = median_heuristic(&xs);
    let d = x.ncols();

    let mut lower = DVector::zeros(d + 2);
    let mut upper = DVector::zeros(d + 2);
    for i in 0..d {
        lower[i] = (1e-3 * heur[i]).ln();
        upper[i] = (1e3 * heur[i]).ln();
    }
    lower[d] = floor.ln();
    upper[d] = (1e4 * scale).ln();
    lower[d + 1] = floor.ln();
    upper[d + 1] = (1e4 * scale).ln();

    let cfg = OptimConfig {
        max_iters: 200,
        ..Default::default()
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mult in [1.0, 0.3, 3.0, 0.1, 0.03] {
        let start = SeArdHypers {
            lengthscales: heur.iter().map(|h| h * mult).collect(),
            variance: scale,
            sigma2: (0.1 * scale).max(floor),
        };
        let run = maximize(
            |t| exact_lml_grad(&xs, &ys, &SeArdHypers::from_log(t)),
            &start.to_log(),
            &lower,
            &upper,
            &cfg,
        );
        match run {
            Ok(r) if r.value.is_finite() => {
                if best.as_ref().is_none_or(|(v, _)| r.value > *v) {
                    best = Some((r.value, r.x));
                }
            }
            Ok(_) => log::warn!("exact GP start {mult} gave a non-finite objective"),
            Err(e) => log::warn!("exact GP start {mult} failed: {e}"),
        }
    }
    Ok(match best {
        Some((value, t)) => InitReport {
            hypers: SeArdHypers::from_log(&t),
            indices,
            lml: value,
            fallback: false,
        },
        None => {
            log::warn!("exact GP initialization failed; using median-heuristic lengthscales");
            InitReport {
                hypers: SeArdHypers {
                    lengthscales: heur,
                    variance: scale,
                    sigma2: (0.1 * scale).max(floor),
                },
                indices,
                lml: f64::NAN,
                fallback: true,
            }
        }
    })
}

/// GRIEF-II objective: the marginal likelihood of the unit-weight Nyström
/// kernel built from `h` on a fixed grid.
pub fn grief_lml(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &GridInducing,
    h: &SeArdHypers,
    p: usize,
) -> Result<(f64, GriefBasis)> {
    let kernel = h.kernel()?;
    let eig = decompose(grid, &kernel)?;
    let basis = build_phi(x, grid.clone(), &kernel, &eig, p)?;
    let stats = precompute(&basis.phi, y)?;
    let value = lml(&stats, &ModelState::unit(basis.p(), h.sigma2)?)?;
    Ok((value, basis))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Type2Config {
    pub mbar: Vec<usize>,
    pub p: usize,
    /// Central-difference step in log-parameter space.
    pub fd_step: f64,
    /// Extra starts drawn around the initial point.
    pub restarts: usize,
    /// Half-width of the search box around the initial point, in log units.
    pub log_radius: f64,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Type2Config {
    pub fn new(mbar: Vec<usize>, p: usize) -> Self {
        Self {
            mbar,
            p,
            fd_step: 1e-5,
            restarts: 3,
            log_radius: 7.0,
            optim: OptimConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Type2Result {
    pub hypers: SeArdHypers,
    pub basis: GriefBasis,
    pub lml: f64,
    /// Report of the winning start.
    pub report: OptimReport,
}

/// Maximizes the GRIEF-II marginal likelihood over log lengthscales, log
/// signal variance and log noise, rebuilding `Phi` at every evaluation and
/// differentiating by central differences.
pub fn optimize_type2(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    init: &SeArdHypers,
    cfg: &Type2Config,
) -> Result<Type2Result> {
    let grid = build_grid(x, &cfg.mbar)?;
    let objective = |t: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (f0, _) = grief_lml(x, y, &grid, &SeArdHypers::from_log(t), cfg.p)?;
        let mut g = DVector::zeros(t.len());
        for i in 0..t.len() {
            let mut tp = t.clone();
            tp[i] += cfg.fd_step;
            let mut tm = t.clone();
            tm[i] -= cfg.fd_step;
            let fp = grief_lml(x, y, &grid, &SeArdHypers::from_log(&tp), cfg.p)?.0;
            let fm = grief_lml(x, y, &grid, &SeArdHypers::from_log(&tm), cfg.p)?.0;
            g[i] = (fp - fm) / (2.0 * cfg.fd_step);
        }
        Ok((f0, g))
    };
    let t0 = init.to_log();
    let lower = t0.add_scalar(-cfg.log_radius);
    let upper = t0.add_scalar(cfg.log_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![t0.clone()];
    for _ in 0..cfg.restarts {
        starts.push(DVector::from_fn(t0.len(), |i, _| {
            t0[i] + 0.5 * rng.sample::<f64, _>(StandardNormal)
        }));
    }
    let mut best: Option<OptimReport> = None;
    for (k, s) in starts.iter().enumerate() {
        match maximize(objective, s, &lower, &upper, &cfg.optim) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.value > b.value) {
                    best = Some(r);
                }
            }
            Err(e) => log::warn!("type-II start {k} failed: {e}"),
        }
    }
    let report = best.ok_or_else(|| {
        GriefError::InvalidParameter("no type-II start produced a finite objective".into())
    })?;
    let hypers = SeArdHypers::from_log(&report.x);
    let (value, basis) = grief_lml(x, y, &grid, &hypers, cfg.p)?;
    Ok(Type2Result {
        hypers,
        basis,
        lml: value,
        report,
    })
}

/// GRIEF-II default basis size `min(1000, 10^floor(log10 n))`, at least 1.
pub fn default_p_type2(n: usize) -> usize {
    if n == 0 {
        return 1;
    }
    let mut pow = 1usize;
    while pow.saturating_mul(10) <= n {
        pow *= 10;
    }
    pow.min(1000)
}
