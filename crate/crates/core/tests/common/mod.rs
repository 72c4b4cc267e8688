//! Dense reference implementations used as oracles by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

/// Explicit Kronecker product, first factor varying slowest.
pub fn kron_dense(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// Row-wise Khatri-Rao product: row `j` is the Kronecker product of the
/// factors' rows `j`.
pub fn khatri_rao_dense(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = factors[0].nrows();
    let m: usize = factors.iter().map(|f| f.ncols()).product();
    let mut out = DMatrix::zeros(n, m);
    for j in 0..n {
        let rows: Vec<DMatrix<f64>> = factors.iter().map(|f| f.rows(j, 1).into_owned()).collect();
        out.set_row(j, &kron_dense(&rows).row(0));
    }
    out
}

pub fn flat_index(tuple: &[usize], sizes: &[usize]) -> usize {
    tuple.iter().zip(sizes).fold(0, |acc, (i, s)| acc * s + i)
}

/// `S_pᵀ`: column `j` has a one at the flat index of tuple `j`.
pub fn selection_dense(tuples: &[Vec<usize>], sizes: &[usize]) -> DMatrix<f64> {
    let m: usize = sizes.iter().product();
    let mut s = DMatrix::zeros(m, tuples.len());
    for (j, t) in tuples.iter().enumerate() {
        s[(flat_index(t, sizes), j)] = 1.0;
    }
    s
}

/// All index tuples in lexicographic order.
pub fn all_tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..s).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

/// Full expansion of `log(⊗ λ⁽ⁱ⁾)`, stably sorted descending so that ties
/// keep lexicographic order; logs summed in dimension order.
pub fn brute_force_top(eigs: &[Vec<f64>], p: usize) -> Vec<(Vec<usize>, f64)> {
    let sizes: Vec<usize> = eigs.iter().map(Vec::len).collect();
    let logs: Vec<Vec<f64>> = eigs.iter().map(|e| e.iter().map(|v| v.ln()).collect()).collect();
    let mut all: Vec<(Vec<usize>, f64)> = all_tuples(&sizes)
        .into_iter()
        .map(|t| {
            let v = t.iter().enumerate().fold(0.0, |acc, (i, &k)| acc + logs[i][k]);
            (t, v)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    all.truncate(p);
    all
}

/// `log N(y; mean, cov)` by dense Cholesky.
pub fn gaussian_log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = Cholesky::new(cov.clone()).expect("oracle covariance must be SPD");
    let r = y - mean;
    let alpha = chol.solve(&r);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (r.dot(&alpha) + log_det + y.len() as f64 * (2.0 * PI).ln())
}

pub fn add_diag(m: &DMatrix<f64>, v: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += v;
    }
    out
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

pub fn random_vector(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Random symmetric positive-definite matrix `B Bᵀ + I`.
pub fn random_spd(rng: &mut impl Rng, p: usize) -> DMatrix<f64> {
    let b = random_matrix(rng, p, p, -0.5, 0.5);
    add_diag(&(&b * b.transpose()), 1.0)
}

/// Standard normal CDF via a Chebyshev-fitted `erfc` (relative error < 1.2e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / 2f64.sqrt();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let erfc = t * poly.exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, i: usize, h: f64) -> f64 {
    let mut a = x.clone();
    a[i] += h;
    let mut b = x.clone();
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}
