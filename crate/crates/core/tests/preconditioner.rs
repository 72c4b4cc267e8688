mod common;

use common::*;
use gp_grief::basis::GriefBasis;
use gp_grief::kernels::ProductKernel;
use gp_grief::model::ModelState;
use gp_grief::precond::{pcg_solve, IdentityPreconditioner, LinearOperator, WoodburyApplier};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Textbook conjugate gradients, independent of the library solver.
fn plain_cg(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iters: usize) -> (DVector<f64>, usize) {
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for k in 1..=max_iters {
        let ap = a * &p;
        let alpha = rr / p.dot(&ap);
        x += &p * alpha;
        r -= &ap * alpha;
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= tol * b.norm() {
            return (x, k);
        }
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    (x, max_iters)
}

fn se_problem(seed: u64, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_matrix(&mut rng, n, 3, -1.5, 1.5);
    let k = ProductKernel::se_ard(&[0.8, 0.8, 0.8], 1.0).unwrap().gram(&x).unwrap();
    let b = random_vector(&mut rng, n, -1.0, 1.0);
    (x, k, b)
}

#[test]
fn woodbury_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = random_matrix(&mut rng, 40, 7, -1.0, 1.0);
    let w = random_vector(&mut rng, 7, 0.2, 2.0);
    let state = ModelState::new(w.clone(), 0.3).unwrap();
    let applier = WoodburyApplier::new(phi.clone(), &state).unwrap();
    let v = random_vector(&mut rng, 40, -1.0, 1.0);
    let dense = add_diag(&(&phi * DMatrix::from_diagonal(&w) * phi.transpose()), 0.3);
    let want = dense.try_inverse().unwrap() * &v;
    assert!((applier.apply(&v).unwrap() - want).amax() < 1e-10);
}

#[test]
fn identity_preconditioner_is_plain_cg() {
    let (_, k, b) = se_problem(2, 120);
    let sigma2 = 0.05;
    let got = pcg_solve(&k, sigma2, &IdentityPreconditioner, &b, 1e-8, 1000).unwrap();
    let (x, iters) = plain_cg(&add_diag(&k, sigma2), &b, 1e-8, 1000);
    assert_eq!(got.iterations, iters);
    assert!((got.x - x).amax() < 1e-8);
}

#[test]
fn grief_preconditioner_reduces_iterations_and_error_norm_decreases() {
    let (x, k, b) = se_problem(3, 300);
    let sigma2 = 0.01;
    let kernel = ProductKernel::se_ard(&[0.8, 0.8, 0.8], 1.0).unwrap();
    let basis = GriefBasis::fit(&x, &kernel, &[8, 8, 8], 60).unwrap();
    let applier = WoodburyApplier::new(basis.phi, &ModelState::unit(60, sigma2).unwrap()).unwrap();
    let plain = pcg_solve(&k, sigma2, &IdentityPreconditioner, &b, 1e-8, 5000).unwrap();
    let pre = pcg_solve(&k, sigma2, &applier, &b, 1e-8, 5000).unwrap();
    assert!(plain.converged && pre.converged);
    assert!(pre.iterations < plain.iterations);

    // CG minimizes the system-norm error over growing Krylov spaces, so the
    // error of successive iterates is non-increasing in that norm.
    let a = add_diag(&k, sigma2);
    let exact = a.clone().cholesky().unwrap().solve(&b);
    let mut prev = f64::INFINITY;
    for iters in 1..=pre.iterations {
        let xk = pcg_solve(&k, sigma2, &applier, &b, 0.0, iters).unwrap().x;
        let e = &xk - &exact;
        let norm = e.dot(&(&a * &e)).sqrt();
        assert!(norm <= prev * (1.0 + 1e-9));
        prev = norm;
    }
}

#[test]
fn tightening_tol_never_reduces_iterations() {
    let (_, k, b) = se_problem(4, 150);
    let mut last = 0;
    for tol in [1e-2, 1e-4, 1e-6, 1e-8, 1e-10] {
        let r = pcg_solve(&k, 0.05, &IdentityPreconditioner, &b, tol, 5000).unwrap();
        assert!(r.iterations >= last);
        last = r.iterations;
    }
}

#[test]
fn budget_flag_and_best_iterate() {
    let (_, k, b) = se_problem(5, 100);
    let r = pcg_solve(&k, 1e-3, &IdentityPreconditioner, &b, 1e-12, 3).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 3);
    assert_eq!(r.residuals.len(), 4);
    assert!(pcg_solve(&k, 1e-3, &IdentityPreconditioner, &DVector::zeros(3), 1e-8, 3).is_err());
}

#[test]
fn operator_trait_for_dense_matrix() {
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
    assert_eq!(LinearOperator::dim(&m), 2);
    assert_eq!(m.apply(&DVector::from_vec(vec![1.0, 1.0])), DVector::from_vec(vec![3.0, 4.0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn woodbury_inverts_dense_system(n in 2usize..120, p in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_matrix(&mut rng, n, p, -1.0, 1.0);
        let w = random_vector(&mut rng, p, 0.1, 2.0);
        let applier = WoodburyApplier::new(phi.clone(), &ModelState::new(w.clone(), 0.2).unwrap()).unwrap();
        let v = random_vector(&mut rng, n, -1.0, 1.0).normalize();
        let dense = add_diag(&(&phi * DMatrix::from_diagonal(&w) * phi.transpose()), 0.2);
        let back = dense * applier.apply(&v).unwrap();
        prop_assert!((back - v).amax() < 1e-9);
    }
}
