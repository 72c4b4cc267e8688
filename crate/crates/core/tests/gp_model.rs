mod common;

use common::*;
use gp_grief::basis::GriefBasis;
use gp_grief::kernels::ProductKernel;
use gp_grief::model::{
    lml, lml_dense_w, lml_fast, lml_grads, lml_with_mean, orthogonalize, precompute, predict,
    predict_features, ModelState,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense posterior of a GP with covariance `Phi W Phiᵀ` and mean `Phi mu`.
fn dense_posterior(
    phi: &DMatrix<f64>,
    phi_s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    mu: &DVector<f64>,
    s2: f64,
    y: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let c = add_diag(&(phi * w * phi.transpose()), s2);
    let ci = c.try_inverse().unwrap();
    let ksx = phi_s * w * phi.transpose();
    let mean = phi_s * mu + &ksx * &ci * (y - phi * mu);
    let cov = phi_s * w * phi_s.transpose() - &ksx * &ci * ksx.transpose();
    let var = cov.diagonal().add_scalar(s2);
    (mean, var)
}

#[test]
fn lml_matches_dense_at_n100_p20() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = random_matrix(&mut rng, 100, 20, -1.0, 1.0);
    let y = random_vector(&mut rng, 100, -2.0, 2.0);
    let w = random_vector(&mut rng, 20, 0.1, 2.0);
    let state = ModelState::new(w.clone(), 0.3).unwrap();
    let got = lml(&precompute(&phi, &y).unwrap(), &state).unwrap();
    let cov = add_diag(&(&phi * DMatrix::from_diagonal(&w) * phi.transpose()), 0.3);
    let want = gaussian_log_density(&y, &DVector::zeros(100), &cov);
    assert!((got - want).abs() <= 1e-8 * want.abs());
}

#[test]
fn gradients_match_finite_differences_n80_p15() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = random_matrix(&mut rng, 80, 15, -1.0, 1.0);
    let y = random_vector(&mut rng, 80, -2.0, 2.0);
    let stats = precompute(&phi, &y).unwrap();
    let w = random_vector(&mut rng, 15, 0.2, 2.0);
    let s2 = 0.4;
    let (dw, ds) = lml_grads(&stats, &ModelState::new(w.clone(), s2).unwrap()).unwrap();
    let theta = DVector::from_iterator(16, w.iter().copied().chain([s2]));
    let f = |t: &DVector<f64>| {
        lml(&stats, &ModelState::new(t.rows(0, 15).into_owned(), t[15]).unwrap()).unwrap()
    };
    for i in 0..16 {
        let fd = central_diff(f, &theta, i, 1e-6 * (1.0 + theta[i].abs()));
        let an = if i < 15 { dw[i] } else { ds };
        assert!((fd - an).abs() <= 1e-5 * an.abs(), "component {i}: {fd} vs {an}");
    }
}

#[test]
fn orthogonalized_basis_is_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_matrix(&mut rng, 50, 12, -1.0, 1.0);
    let y = random_vector(&mut rng, 50, -1.0, 1.0);
    let (t, stats) = orthogonalize(&phi, &y).unwrap();
    let pt = t.apply(&phi);
    assert!((pt.transpose() * &pt - DMatrix::identity(12, 12)).amax() < 1e-8);
    assert!((pt.transpose() * &y - &stats.r).amax() < 1e-10);
}

#[test]
fn fast_path_equals_cubic_path_with_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = random_matrix(&mut rng, 40, 10, -1.0, 1.0);
    let y = random_vector(&mut rng, 40, -1.0, 1.0);
    let (t, orth) = orthogonalize(&phi, &y).unwrap();
    let state = ModelState::new(random_vector(&mut rng, 10, 0.2, 3.0), 0.2)
        .unwrap()
        .with_mean(random_vector(&mut rng, 10, -1.0, 1.0));
    let fast = lml_fast(&orth, &state).unwrap();
    let slow = lml(&precompute(&t.apply(&phi), &y).unwrap(), &state).unwrap();
    assert!((fast.value - slow).abs() <= 1e-10 * slow.abs());
}

#[test]
fn predict_matches_dense_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = random_matrix(&mut rng, 30, 6, -1.0, 1.0);
    let phi_s = random_matrix(&mut rng, 9, 6, -1.0, 1.0);
    let y = random_vector(&mut rng, 30, -1.0, 1.0);
    let w = random_vector(&mut rng, 6, 0.2, 2.0);
    let mu = random_vector(&mut rng, 6, -1.0, 1.0);
    let stats = precompute(&phi, &y).unwrap();
    let wd = random_spd(&mut rng, 6);
    let cases = [
        (ModelState::new(w.clone(), 0.3).unwrap(), DMatrix::from_diagonal(&w), DVector::zeros(6)),
        (
            ModelState::new(w.clone(), 0.3).unwrap().with_mean(mu.clone()),
            DMatrix::from_diagonal(&w),
            mu.clone(),
        ),
        (
            ModelState::new(w.clone(), 0.3).unwrap().with_dense_w(wd.clone()).with_mean(mu.clone()),
            wd.clone(),
            mu.clone(),
        ),
    ];
    for (state, wm, m) in cases {
        let got = predict_features(&phi_s, &stats, &state).unwrap();
        let (mean, var) = dense_posterior(&phi, &phi_s, &wm, &m, 0.3, &y);
        assert!((got.mean - mean).amax() < 1e-8);
        assert!((got.var - var).amax() < 1e-8);
    }
}

#[test]
fn predict_on_orthogonal_stats_matches_dense_transformed_model() {
    // The weights live in the transformed coordinates.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let phi = random_matrix(&mut rng, 25, 5, -1.0, 1.0);
    let phi_s = random_matrix(&mut rng, 7, 5, -1.0, 1.0);
    let y = random_vector(&mut rng, 25, -1.0, 1.0);
    let (t, orth) = orthogonalize(&phi, &y).unwrap();
    let w = random_vector(&mut rng, 5, 0.2, 2.0);
    let state = ModelState::new(w.clone(), 0.25).unwrap();
    let got = predict_features(&t.apply(&phi_s), &orth, &state).unwrap();
    let (mean, var) = dense_posterior(&t.apply(&phi), &t.apply(&phi_s), &DMatrix::from_diagonal(&w), &DVector::zeros(5), 0.25, &y);
    assert!((got.mean - mean).amax() < 1e-8);
    assert!((got.var - var).amax() < 1e-8);
}

#[test]
fn noise_dominated_shrinkage() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let phi = random_matrix(&mut rng, 20, 4, -1.0, 1.0);
    let y = random_vector(&mut rng, 20, -1.0, 1.0);
    let stats = precompute(&phi, &y).unwrap();
    let pred = predict_features(&phi, &stats, &ModelState::unit(4, 1e8).unwrap()).unwrap();
    assert!(pred.mean.amax() < 1e-6);
}

#[test]
fn predict_through_basis_uses_phi_at() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_matrix(&mut rng, 30, 2, -1.0, 1.0);
    let y = random_vector(&mut rng, 30, -1.0, 1.0);
    let kernel = ProductKernel::se_ard(&[0.7, 0.9], 1.0).unwrap();
    let basis = GriefBasis::fit(&x, &kernel, &[6, 6], 8).unwrap();
    let stats = precompute(&basis.phi, &y).unwrap();
    let state = ModelState::unit(8, 0.1).unwrap();
    let xs = random_matrix(&mut rng, 5, 2, -1.0, 1.0);
    let a = predict(&basis.functions, None, &stats, &state, &xs).unwrap();
    let b = predict_features(&basis.phi_at(&xs).unwrap(), &stats, &state).unwrap();
    assert_eq!(a, b);
    let wrong = random_matrix(&mut rng, 5, 3, -1.0, 1.0);
    assert!(predict(&basis.functions, None, &stats, &state, &wrong).is_err());
}

#[test]
fn dense_w_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi = random_matrix(&mut rng, 60, 10, -1.0, 1.0);
    let y = random_vector(&mut rng, 60, -1.0, 1.0);
    let stats = precompute(&phi, &y).unwrap();
    let w = random_vector(&mut rng, 10, 0.2, 2.0);
    let diag = lml(&stats, &ModelState::new(w.clone(), 0.3).unwrap()).unwrap();
    let dense = lml_dense_w(&stats, &DMatrix::from_diagonal(&w), 0.3).unwrap();
    assert!((diag - dense).abs() <= 1e-12 * diag.abs());

    let wd = random_spd(&mut rng, 10);
    let got = lml_dense_w(&stats, &wd, 0.3).unwrap();
    let want = gaussian_log_density(&y, &DVector::zeros(60), &add_diag(&(&phi * &wd * phi.transpose()), 0.3));
    assert!((got - want).abs() <= 1e-8 * want.abs());

    let one = precompute(&DMatrix::from_element(2, 1, 0.5), &DVector::from_vec(vec![1.0, -1.0])).unwrap();
    let got = lml_dense_w(&one, &DMatrix::from_element(1, 1, 2.0), 0.4).unwrap();
    let want = gaussian_log_density(
        &DVector::from_vec(vec![1.0, -1.0]),
        &DVector::zeros(2),
        &DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.5, 0.9]),
    );
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn mean_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let phi = random_matrix(&mut rng, 50, 6, -1.0, 1.0);
    let truth = random_vector(&mut rng, 6, -1.0, 1.0);
    let y = &phi * &truth + random_vector(&mut rng, 50, -0.01, 0.01);
    let stats = precompute(&phi, &y).unwrap();
    let base = ModelState::unit(6, 1e-4).unwrap();
    let zero = lml_with_mean(&stats, &base.clone().with_mean(DVector::zeros(6))).unwrap();
    assert_eq!(zero, lml(&stats, &base).unwrap());
    assert!(lml_with_mean(&stats, &base).is_err());

    let ls = (phi.transpose() * &phi).try_inverse().unwrap() * phi.transpose() * &y;
    assert!(lml_with_mean(&stats, &base.clone().with_mean(ls)).unwrap() > zero);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lemma_consistency(n in 2usize..120, p in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_matrix(&mut rng, n, p, -1.0, 1.0);
        let y = random_vector(&mut rng, n, -2.0, 2.0);
        let w = random_vector(&mut rng, p, 0.05, 3.0);
        let s2 = rng.random_range(0.02..2.0);
        let got = lml(&precompute(&phi, &y).unwrap(), &ModelState::new(w.clone(), s2).unwrap()).unwrap();
        let cov = add_diag(&(&phi * DMatrix::from_diagonal(&w) * phi.transpose()), s2);
        let want = gaussian_log_density(&y, &DVector::zeros(n), &cov);
        prop_assert!((got - want).abs() <= 1e-8 * want.abs());
    }

    #[test]
    fn variance_never_below_noise(n in 2usize..40, p in 1usize..15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_matrix(&mut rng, n, p, -3.0, 3.0);
        let phi_s = random_matrix(&mut rng, 10, p, -3.0, 3.0);
        let y = random_vector(&mut rng, n, -2.0, 2.0);
        let s2 = rng.random_range(1e-4..1.0);
        let state = ModelState::new(random_vector(&mut rng, p, 1e-3, 1e3), s2).unwrap();
        let pred = predict_features(&phi_s, &precompute(&phi, &y).unwrap(), &state).unwrap();
        prop_assert!(pred.var.iter().all(|&v| v >= s2 * (1.0 - 1e-10)));
    }

    #[test]
    fn fast_path_equivalence(n in 5usize..80, p in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_matrix(&mut rng, n, p, -1.0, 1.0);
        let y = random_vector(&mut rng, n, -1.0, 1.0);
        let (t, orth) = orthogonalize(&phi, &y).unwrap();
        let state = ModelState::new(random_vector(&mut rng, t.effective_p(), 0.1, 3.0), rng.random_range(0.05..1.0)).unwrap();
        let fast = lml_fast(&orth, &state).unwrap();
        let slow = lml(&precompute(&t.apply(&phi), &y).unwrap(), &state).unwrap();
        prop_assert!((fast.value - slow).abs() <= 1e-10 * slow.abs());
    }
}
