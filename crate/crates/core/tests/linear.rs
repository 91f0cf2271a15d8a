use bmf_core::linear::{kkt_violation, lambda_max, lars_path, lasso_cd_cov, CdOptions, CovSystem};
use bmf_core::rng::stream;
use bmf_core::Matrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn problem(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = stream(seed, &[]);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| draw()).collect()).unwrap();
    let y = (0..n).map(|i| 1.5 * x.get(i, 0) - x.get(i, d - 1) + 0.5 * draw()).collect();
    (x, y)
}

fn tight() -> CdOptions {
    CdOptions {
        tol: 1e-13,
        max_iter: 200_000,
        record_objective: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sweeps_never_raise_the_objective(n in 20usize..60, d in 2usize..20, frac in 0.001..1.0f64, seed in any::<u64>()) {
        let (x, y) = problem(n, d, seed);
        let sys = CovSystem::single(&x, &y).unwrap();
        let lambda = frac * lambda_max(&sys, 0);
        let fit = lasso_cd_cov(&sys, 0, lambda, &tight(), None).unwrap();
        for w in fit.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(fit.converged);
        prop_assert!(kkt_violation(&sys, 0, &fit.beta, lambda) < 1e-6);
    }

    #[test]
    fn warm_refit_at_the_same_penalty_stays_put(n in 20usize..60, d in 2usize..20, frac in 0.01..1.0f64, seed in any::<u64>()) {
        let (x, y) = problem(n, d, seed);
        let sys = CovSystem::single(&x, &y).unwrap();
        let lambda = frac * lambda_max(&sys, 0);
        let opts = CdOptions::default();
        let cold = lasso_cd_cov(&sys, 0, lambda, &opts, None).unwrap();
        let warm = lasso_cd_cov(&sys, 0, lambda, &opts, Some(&cold.beta)).unwrap();
        for (a, b) in warm.beta.iter().zip(&cold.beta) {
            prop_assert!((a - b).abs() < opts.tol, "{a} vs {b}");
        }
    }

    #[test]
    fn lars_knots_solve_the_lasso(seed in any::<u64>()) {
        let (x, y) = problem(30, 15, seed);
        let path = lars_path(&x, &y, 1000).unwrap();
        let sys = CovSystem::single(&x, &y).unwrap();
        for k in &path.knots {
            prop_assert!(kkt_violation(&sys, 0, &k.beta, k.lambda) < 1e-6, "kkt at λ = {}", k.lambda);
            let cd = lasso_cd_cov(&sys, 0, k.lambda, &tight(), None).unwrap();
            let gap = cd.beta.iter().zip(&k.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap < 1e-4, "gap {gap} at λ = {}", k.lambda);
        }
        for w in path.knots.windows(2) {
            prop_assert!(w[1].lambda < w[0].lambda);
        }
    }
}
