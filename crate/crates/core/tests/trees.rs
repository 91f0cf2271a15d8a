use bmf_core::trees::{gbt_fit, rf_fit, ForestModel, ForestParams, GbtParams};
use bmf_core::Matrix;
use proptest::prelude::*;

fn design(n: usize, d: usize, k: usize) -> impl Strategy<Value = (Matrix, Matrix)> {
    (
        prop::collection::vec(-5.0f64..5.0, n * d),
        prop::collection::vec(-100.0f64..100.0, n * k),
    )
        .prop_map(move |(xv, yv)| (Matrix::from_vec(n, d, xv).unwrap(), Matrix::from_vec(n, k, yv).unwrap()))
}

fn forest_params() -> ForestParams {
    ForestParams {
        n_trees: 8,
        max_depth: Some(4),
        min_samples_leaf: 1,
        max_features: 0.6,
        bootstrap: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forest_ignores_tree_order((x, y) in design(30, 3, 2), seed in any::<u64>(), probe in prop::collection::vec(-6.0f64..6.0, 3)) {
        let f = rf_fit(&x, &y, &forest_params(), seed).unwrap();
        let mut shuffled: ForestModel = f.clone();
        shuffled.trees.reverse();
        shuffled.trees.rotate_left(3);
        prop_assert_eq!(f.predict(&probe), shuffled.predict(&probe));
    }

    #[test]
    fn forest_stays_within_training_range((x, y) in design(25, 2, 3), seed in any::<u64>(), probe in prop::collection::vec(-10.0f64..10.0, 2)) {
        let f = rf_fit(&x, &y, &forest_params(), seed).unwrap();
        let p = f.predict(&probe);
        for k in 0..3 {
            let c = y.column(k);
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p[k] >= lo && p[k] <= hi, "{} outside [{}, {}]", p[k], lo, hi);
        }
    }

    #[test]
    fn boosting_never_raises_training_error((x, y) in design(30, 3, 1), depth in 0usize..4, lambda in 0.0f64..5.0, eta in 0.05f64..1.0) {
        let p = GbtParams {
            n_rounds: 25,
            learning_rate: eta,
            max_depth: depth,
            lambda_reg: lambda,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            min_child_weight: 1.0,
        };
        let m = gbt_fit(&x, &y, &p, 1).unwrap();
        let mse = |r: usize| {
            (0..x.rows()).map(|i| (m.predict_rounds(x.row(i), r)[0] - y.get(i, 0)).powi(2)).sum::<f64>()
        };
        let mut prev = mse(0);
        for r in 1..=25 {
            let cur = mse(r);
            prop_assert!(cur <= prev, "round {}: {} > {}", r, cur, prev);
            prev = cur;
        }
    }
}

#[test]
fn snapshots_do_not_depend_on_thread_count() {
    let n = 120;
    let x = Matrix::from_vec(n, 6, (0..n * 6).map(|i| ((i * 7919) % 211) as f64 / 10.0).collect()).unwrap();
    let y = Matrix::from_vec(n, 4, (0..n * 4).map(|i| ((i * 104_729) % 97) as f64).collect()).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let rf = rf_fit(&x, &y, &forest_params(), 11).unwrap().to_json().unwrap();
            let gp = GbtParams {
                n_rounds: 15,
                subsample: 0.8,
                colsample: 0.5,
                ..Default::default()
            };
            let gbt = gbt_fit(&x, &y, &gp, 11).unwrap().to_json().unwrap();
            (rf, gbt)
        })
    };
    assert_eq!(run(1), run(4));
}
