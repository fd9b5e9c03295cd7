use demandml::acceptance::plain_matrix;
use demandml::features::{assemble_space, FeatureSpace};
use demandml::learners::{
    fit_lasso_cv, fit_lasso_fixed, fit_logit, fit_logit_surplus, fit_random_forest, sigmoid, variable_importance,
    ForestConfig, LassoConfig,
};
use demandml::sim::{simulate_cohort, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(n: usize, beta: &[f64], b0: f64, seed: u64) -> demandml::features::FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let mut eta = b0;
        for b in beta {
            let v: f64 = rng.random::<f64>() * 4.0 - 2.0;
            data.push(v);
            eta += b * v;
        }
        y.push(rng.random::<f64>() < sigmoid(eta));
    }
    plain_matrix((0..beta.len()).map(|j| format!("x{j}")).collect(), data, y)
}

fn log_lik(x: &demandml::features::FeatureMatrix, b0: f64, b1: f64) -> f64 {
    (0..x.n_rows())
        .map(|i| {
            let p = sigmoid(b0 + b1 * x.get(i, 0));
            if x.outcome[i] { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

#[test]
fn irls_matches_likelihood_grid_search() {
    let x = toy(400, &[1.3], -0.4, 1);
    let (b0, coefs) = fit_logit(&x.all()).unwrap().raw_coefficients();
    let b1 = coefs[0].1;
    // Coarse-to-fine grid search on the log-likelihood.
    let (mut c0, mut c1, mut step) = (0.0, 0.0, 1.0);
    for _ in 0..40 {
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in -10..=10 {
            for j in -10..=10 {
                let (a, b) = (c0 + i as f64 * step, c1 + j as f64 * step);
                let ll = log_lik(&x, a, b);
                if ll > best.0 {
                    best = (ll, a, b);
                }
            }
        }
        (c0, c1) = (best.1, best.2);
        step *= 0.5;
    }
    assert!((b0 - c0).abs() < 1e-6, "{b0} vs {c0}");
    assert!((b1 - c1).abs() < 1e-6, "{b1} vs {c1}");
}

#[test]
fn flipping_outcomes_negates_the_fit() {
    let x = toy(500, &[0.9, -0.5, 0.2], 0.3, 2);
    let mut flipped = x.clone();
    flipped.outcome.iter_mut().for_each(|y| *y = !*y);
    let (a0, a) = fit_logit(&x.all()).unwrap().raw_coefficients();
    let (b0, b) = fit_logit(&flipped.all()).unwrap().raw_coefficients();
    assert!((a0 + b0).abs() < 1e-8);
    for (u, v) in a.iter().zip(&b) {
        assert!((u.1 + v.1).abs() < 1e-8);
    }
}

#[test]
fn surplus_logit_depends_on_price_only_through_surplus() {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(3)).unwrap();
    let x = assemble_space(&c, FeatureSpace::C, false);
    let m = fit_logit_surplus(&x.all()).unwrap();
    // Shift price and WTP together; predictions must not move.
    let mut shifted = x.clone();
    for meta in &mut shifted.meta {
        let up = |v: demandml::domain::Money| demandml::domain::Money::from_cents(v.cents() + 100).unwrap();
        meta.price = up(meta.price);
        meta.wtp = up(meta.wtp);
    }
    let p = m.predict(&x.all()).unwrap();
    let q = m.predict(&shifted.all()).unwrap();
    for (a, b) in p.iter().zip(&q) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn surplus_logit_matches_hand_built_design() {
    let (c, _) = simulate_cohort(&SimConfig { n_subjects: 8, n_items: 4, ..SimConfig::with_seed(4) }).unwrap();
    let x = assemble_space(&c, FeatureSpace::C, false);
    let (ns, nj) = (c.n_subjects(), c.n_items());
    let mut names = vec!["s".to_string()];
    for j in 1..nj {
        names.push(format!("i{j}"));
        names.push(format!("si{j}"));
    }
    for s in 1..ns {
        names.push(format!("u{s}"));
        names.push(format!("su{s}"));
    }
    let mut data = Vec::new();
    for m in &x.meta {
        let sur = (m.wtp.cents() as f64 - m.price.cents() as f64) / 100.0;
        data.push(sur);
        for j in 1..nj {
            let d = (m.item.index() == j) as u8 as f64;
            data.extend([d, d * sur]);
        }
        for s in 1..ns {
            let d = (m.subject.index() == s) as u8 as f64;
            data.extend([d, d * sur]);
        }
    }
    let hand = plain_matrix(names, data, x.outcome.clone());
    let a = fit_logit_surplus(&x.all()).unwrap().predict(&x.all()).unwrap();
    let b = fit_logit(&hand.all()).unwrap().predict(&hand.all()).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-6, "{u} vs {v}");
    }
}

#[test]
fn lasso_limits() {
    let x = toy(600, &[1.0, -0.7, 0.0, 0.4], 0.2, 5);
    let base = x.outcome.iter().filter(|&&b| b).count() as f64 / 600.0;
    let null = fit_lasso_fixed(&x.all(), 1e3, &LassoConfig::default()).unwrap();
    assert_eq!(null.n_nonzero(), 0);
    for p in null.predict(&x.all()).unwrap() {
        assert!((p - base).abs() < 1e-10);
    }
    let free = fit_lasso_fixed(&x.all(), 0.0, &LassoConfig::default()).unwrap().raw_coefficients();
    let irls = fit_logit(&x.all()).unwrap().raw_coefficients();
    assert!((free.0 - irls.0).abs() < 1e-3);
    for (a, b) in free.1.iter().zip(&irls.1) {
        assert!((a.1 - b.1).abs() < 1e-3);
    }
}

#[test]
fn lasso_sparsity_grows_with_penalty() {
    let x = toy(600, &[1.0, -0.7, 0.0, 0.4, 0.0, 0.0], 0.0, 6);
    let nnz: Vec<usize> = [0.2, 0.05, 0.01, 0.001]
        .iter()
        .map(|&l| fit_lasso_fixed(&x.all(), l, &LassoConfig::default()).unwrap().n_nonzero())
        .collect();
    assert!(nnz.windows(2).all(|w| w[0] <= w[1]), "{nnz:?}");
}

#[test]
fn lasso_cv_is_seed_deterministic_and_picks_from_path() {
    let x = toy(400, &[0.8, 0.0, -0.5], 0.1, 7);
    let cfg = LassoConfig { n_lambda: 30, ..LassoConfig::default() };
    let a = fit_lasso_cv(&x.all(), &cfg, 1).unwrap();
    let b = fit_lasso_cv(&x.all(), &cfg, 1).unwrap();
    assert_eq!(a, b);
    let info = a.lasso.unwrap();
    assert_eq!(info.lambda_path.len(), 30);
    assert_eq!(info.lambda, info.lambda_path[info.selected_index]);
    let min = info.cv_deviance.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(info.cv_deviance[info.selected_index], min);
}

#[test]
fn forest_with_huge_leaves_predicts_base_rate() {
    let x = toy(300, &[2.0], 0.0, 8);
    let base = x.outcome.iter().filter(|&&b| b).count() as f64 / 300.0;
    let cfg = ForestConfig {
        n_trees: 200,
        mtry_grid: Some(vec![1]),
        min_leaf_grid: vec![300],
        ..ForestConfig::default()
    };
    let f = fit_random_forest(&x.all(), &cfg, 1).unwrap();
    assert!(f.trees.iter().all(|t| t.n_nodes() == 1));
    for p in f.predict(&x.all()).unwrap() {
        assert!((p - base).abs() < 1e-3);
    }
}

#[test]
fn forest_separates_a_clean_threshold() {
    let n = 200;
    let data: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<bool> = (0..n).map(|i| i >= 120).collect();
    let x = plain_matrix(vec!["x".into()], data, y.clone());
    let cfg = ForestConfig {
        n_trees: 20,
        mtry_grid: Some(vec![1]),
        min_leaf_grid: vec![1],
        bootstrap: false,
        ..ForestConfig::default()
    };
    let f = fit_random_forest(&x.all(), &cfg, 1).unwrap();
    let p = f.predict(&x.all()).unwrap();
    for (pi, yi) in p.iter().zip(&y) {
        assert_eq!(*pi, if *yi { 1.0 } else { 0.0 });
    }
}

#[test]
fn forest_is_seed_deterministic() {
    let x = toy(300, &[1.0, 0.5], 0.0, 9);
    let cfg = ForestConfig { n_trees: 30, ..ForestConfig::default() };
    let a = fit_random_forest(&x.all(), &cfg, 4).unwrap();
    let b = fit_random_forest(&x.all(), &cfg, 4).unwrap();
    let c = fit_random_forest(&x.all(), &cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.trees, c.trees);
}

#[test]
fn importance_ranks_signal_above_noise() {
    let x = toy(800, &[2.5, 0.0, 0.0], 0.0, 10);
    let cfg = ForestConfig {
        n_trees: 100,
        mtry_grid: Some(vec![2]),
        min_leaf_grid: vec![5],
        ..ForestConfig::default()
    };
    let f = fit_random_forest(&x.all(), &cfg, 2).unwrap();
    let imp = variable_importance(&f, &x.all(), 3).unwrap();
    assert_eq!(imp.len(), 3);
    assert!(imp[0].mean_decrease_accuracy > 10.0 * imp[1].mean_decrease_accuracy.abs());
    assert!(imp[0].mean_decrease_accuracy > 10.0 * imp[2].mean_decrease_accuracy.abs());
    assert!(imp[0].mean_decrease_gini > imp[1].mean_decrease_gini);
}
