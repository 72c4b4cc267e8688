//! Box-constrained BFGS maximizer with backtracking line search.
//!
//! Steps are accepted only when they raise the objective, so the recorded
//! trace is non-decreasing by construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{GriefError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub max_iters: usize,
    /// Stop when the projected gradient's max-norm falls below
    /// `grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
    /// Stop when an accepted step changes `f` by less than `f_tol * max(1, |f|)`.
    pub f_tol: f64,
    pub max_backtracks: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimReport {
    pub x: DVector<f64>,
    pub value: f64,
    /// Objective after each accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
}

fn project(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].clamp(lower[i], upper[i]))
}

/// Gradient with components that point out of the box at active bounds removed.
fn projected_gradient(
    x: &DVector<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        if (x[i] <= lower[i] && g[i] < 0.0) || (x[i] >= upper[i] && g[i] > 0.0) {
            0.0
        } else {
            g[i]
        }
    })
}

/// Maximizes `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient; an `Err` or non-finite value at a trial point is treated as a
/// failed step.
pub fn maximize<F>(
    mut f: F,
    x0: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    cfg: &OptimConfig,
) -> Result<OptimReport>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let dim = x0.len();
    if lower.len() != dim || upper.len() != dim {
        return Err(GriefError::DimensionMismatch(format!(
            "start has {dim} entries, bounds have {} and {}",
            lower.len(),
            upper.len()
        )));
    }
    let mut x = project(x0, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(GriefError::InvalidParameter(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut evaluations = 1;
    let mut trace = vec![fx];
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let pg = projected_gradient(&x, &g, lower, upper);
        if pg.amax() <= cfg.grad_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = &h * &pg;
        if dir.dot(&pg) <= 0.0 {
            h = DMatrix::identity(dim, dim);
            dir = pg.clone();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let xt = project(&(&x + &dir * t), lower, upper);
            let s = &xt - &x;
            if s.amax() == 0.0 {
                break;
            }
            evaluations += 1;
            if let Ok((ft, gt)) = f(&xt) {
                let finite = ft.is_finite() && gt.iter().all(|v| v.is_finite());
                if finite && ft > fx && ft >= fx + 1e-4 * g.dot(&s) {
                    accepted = Some((xt, ft, gt, s));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            // No ascent possible along the quasi-Newton or gradient direction.
            converged = true;
            break;
        };
        // BFGS update of the inverse Hessian of -f.
        let yv = &g - &gn;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let small_change = (fn_ - fx).abs() <= cfg.f_tol * fn_.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        if small_change {
            converged = true;
            break;
        }
    }
    let budget_exhausted = !converged;
    if budget_exhausted {
        log::warn!("optimizer stopped after {iterations} iterations without converging");
    }
    Ok(OptimReport {
        x,
        value: fx,
        trace,
        iterations,
        evaluations,
        converged,
        budget_exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
        let g = DVector::from_vec(vec![
            2.0 * (1.0 - a) + 400.0 * a * (b - a * a),
            -200.0 * (b - a * a),
        ]);
        Ok((f, g))
    }

    fn wide() -> (DVector<f64>, DVector<f64>) {
        (DVector::from_element(2, -10.0), DVector::from_element(2, 10.0))
    }

    #[test]
    fn finds_rosenbrock_optimum() {
        let (lo, hi) = wide();
        let cfg = OptimConfig {
            max_iters: 500,
            ..Default::default()
        };
        let r = maximize(rosenbrock, &DVector::from_vec(vec![-1.2, 1.0]), &lo, &hi, &cfg).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn respects_bounds() {
        let lo = DVector::from_element(2, -10.0);
        let hi = DVector::from_vec(vec![0.5, 10.0]);
        let r = maximize(rosenbrock, &DVector::zeros(2), &lo, &hi, &OptimConfig::default()).unwrap();
        assert!(r.x[0] <= 0.5);
        assert!((r.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let (lo, hi) = wide();
        let r = maximize(rosenbrock, &DVector::from_element(2, 1.0), &lo, &hi, &OptimConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn budget_flag() {
        let (lo, hi) = wide();
        let cfg = OptimConfig {
            max_iters: 2,
            ..Default::default()
        };
        let r = maximize(rosenbrock, &DVector::from_vec(vec![-1.2, 1.0]), &lo, &hi, &cfg).unwrap();
        assert!(r.budget_exhausted && !r.converged);
    }
}
