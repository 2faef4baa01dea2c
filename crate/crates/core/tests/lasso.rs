use lasso_phase::lasso::{basis_pursuit, lasso_path, solve_lasso, BasisPursuitOptions, LassoOptions};
use lasso_phase::rng;
use lasso_phase::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, &[1]);
    DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - x * b).norm_squared() + lambda * b.lp_norm(1)
}

#[test]
fn beats_subgradient_oracle() {
    let (n, p) = (20, 50);
    let x = gaussian(n, p, 1) / (n as f64).sqrt();
    let mut r = rng::stream(1, &[2]);
    let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
    let lambda = 0.1;
    let sol = solve_lasso(&x, &y, lambda, &LassoOptions::default()).unwrap();
    // subgradient descent with diminishing steps, tracking the best objective
    let mut b = DVector::zeros(p);
    let mut best = objective(&x, &y, &b, lambda);
    let xt = x.transpose();
    for k in 0..1_000_000 {
        let g = -(&xt * (&y - &x * &b)) + b.map(|v: f64| if v == 0.0 { 0.0 } else { lambda * v.signum() });
        b -= g * (0.05 / ((k + 1) as f64).sqrt());
        best = best.min(objective(&x, &y, &b, lambda));
    }
    assert!(sol.objective <= best + 1e-8, "{} vs {best}", sol.objective);
}

#[test]
fn objective_nonincreasing_across_sweeps() {
    let x = gaussian(30, 60, 3) / 30f64.sqrt();
    let y = x.column(0) * 2.0 - x.column(7) + gaussian(30, 1, 4).column(0) * 0.1;
    let lambda = 0.05;
    let mut last = f64::INFINITY;
    for sweeps in 1..=12 {
        let opts = LassoOptions { tol: 1e-300, max_sweeps: sweeps };
        let beta = match solve_lasso(&x, &y, lambda, &opts) {
            Err(Error::NotConverged { last_iterate, .. }) => DVector::from_vec(last_iterate),
            Ok(s) => s.beta,
            Err(e) => panic!("{e}"),
        };
        let obj = objective(&x, &y, &beta, lambda);
        assert!(obj <= last + 1e-12, "sweep {sweeps}: {obj} > {last}");
        last = obj;
    }
}

#[test]
fn path_is_lipschitz_in_lambda() {
    // with n > p the path slope is bounded by √p / λ_min(XᵀX)
    let (n, p) = (60, 30);
    let x = gaussian(n, p, 5) / (n as f64).sqrt();
    let beta0 = DVector::from_fn(p, |i, _| if i % 5 == 0 { 1.0 } else { 0.0 });
    let y = &x * &beta0 + gaussian(n, 1, 6).column(0) * 0.2;
    let lmax = (x.transpose() * &y).amax();
    let lambdas: Vec<f64> = (0..100).map(|k| lmax * (1.0 - k as f64 / 100.0)).collect();
    let path = lasso_path(&x, &y, &lambdas, &LassoOptions::default()).unwrap();
    let c = (p as f64).sqrt() / (x.transpose() * &x).symmetric_eigen().eigenvalues.min();
    for (w, l) in path.windows(2).zip(lambdas.windows(2)) {
        let step = (&w[1].beta - &w[0].beta).norm();
        assert!(step <= c * (l[0] - l[1]) * (1.0 + 1e-6), "{step} > {}", c * (l[0] - l[1]));
    }
}

#[test]
fn kkt_at_solution() {
    let x = gaussian(40, 100, 7) / 40f64.sqrt();
    let y = x.column(3) * 1.5 + x.column(50) * -2.0;
    for lambda in [0.01, 0.1, 0.5] {
        let s = solve_lasso(&x, &y, lambda, &LassoOptions::default()).unwrap();
        let g = x.transpose() * (&y - &x * &s.beta);
        for j in 0..100 {
            if s.beta[j] != 0.0 {
                assert!((g[j] - lambda * s.beta[j].signum()).abs() <= 1e-9);
            } else {
                assert!(g[j].abs() <= lambda + 1e-9);
            }
        }
        assert_eq!(s.active.len(), s.beta.iter().filter(|b| **b != 0.0).count());
    }
}

#[test]
fn basis_pursuit_square_system() {
    // the continuation stops at λ_final > 0, whose shrinkage bias is at most
    // λ_final √p / σ_min(X)²
    let x = gaussian(12, 12, 8);
    let truth = DVector::from_fn(12, |i, _| i as f64 - 5.5);
    let y = &x * &truth;
    let opts = BasisPursuitOptions::default();
    let bp = basis_pursuit(&x, &y, &opts).unwrap();
    let lambda_final = opts.final_ratio * (x.transpose() * &y).amax();
    let sigma_min = x.clone().svd(false, false).singular_values.min();
    let bound = lambda_final * 12f64.sqrt() / (sigma_min * sigma_min);
    let err = (&bp.beta - &truth).norm();
    assert!(err <= 1.01 * bound, "error {err:e} above bias bound {bound:e}");
    assert!(err / truth.norm() <= 1e-4);
}

#[test]
fn basis_pursuit_recovers_sparse_signals() {
    let (n, p, k) = (80, 100, 10);
    let mut successes = 0;
    for trial in 0..100u64 {
        let x = gaussian(n, p, 100 + trial) / (n as f64).sqrt();
        let mut r = rng::stream(100 + trial, &[9]);
        let mut beta0 = DVector::zeros(p);
        for j in rand::seq::index::sample(&mut r, p, k) {
            beta0[j] = if r.random::<bool>() { 1.0 } else { -1.0 };
        }
        let bp = basis_pursuit(&x, &(&x * &beta0), &BasisPursuitOptions::default()).unwrap();
        if (&bp.beta - &beta0).norm() <= 1e-4 * beta0.norm() {
            successes += 1;
        }
    }
    assert!(successes >= 95, "{successes}/100");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn warm_and_cold_starts_agree(seed in 0u64..1000, lambda in 0.01f64..1.0) {
        let x = gaussian(15, 25, seed);
        let y = gaussian(15, 1, seed + 1).column(0).into_owned();
        let opts = LassoOptions::default();
        let cold = solve_lasso(&x, &y, lambda, &opts).unwrap();
        let warm = lasso_phase::lasso::solve_lasso_warm(&x, &y, lambda, Some(&DVector::from_element(25, 1.0)), &opts).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-8 * cold.objective.max(1.0));
    }
}
