use std::collections::{BTreeSet, HashMap};

use demandml::evaluation::metrics::{auc, binomial_deviance, mse};
use demandml::evaluation::report::{
    consolidate, evaluate, read_report_rows, sample_size_sweep, write_report_rows, Metric, ReportRow,
};
use demandml::evaluation::splits::{Protocol, SplitSpec};
use demandml::features::FeatureSpace;
use demandml::learners::{ForestConfig, LassoConfig};
use demandml::model::{FitOptions, ModelSpec};
use demandml::sim::{simulate_cohort, SimConfig};
use demandml::Error;
use proptest::prelude::*;

fn cohort(seed: u64) -> demandml::domain::Cohort {
    simulate_cohort(&SimConfig::with_seed(seed)).unwrap().0
}

fn quick_opts(seed: u64) -> FitOptions {
    FitOptions {
        seed,
        forest: ForestConfig {
            n_trees: 10,
            mtry_fractions: Some(vec![0.1]),
            min_leaf_grid: vec![5],
            ..ForestConfig::default()
        },
        lasso: LassoConfig { n_folds: 3, n_lambda: 10, ..LassoConfig::default() },
    }
}

#[test]
fn stratified_holdout_draws_equally_from_each_quintile() {
    let c = cohort(1);
    let split = SplitSpec::new(Protocol::WithinBetween, 9).split(&c, 0).unwrap();
    assert_eq!(split.test.len(), 440);
    assert_eq!(split.train.len() + split.test.len(), c.buy.len());
    let test: BTreeSet<usize> = split.test.iter().copied().collect();
    assert!(split.train.iter().all(|i| !test.contains(i)));

    // Recompute quintiles from scratch.
    let ns = c.n_subjects();
    let mut freq = vec![(0usize, 0usize); ns];
    for b in &c.buy {
        freq[b.subject.index()].0 += b.bought as usize;
        freq[b.subject.index()].1 += 1;
    }
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| {
        let fa = freq[a].0 as f64 / freq[a].1 as f64;
        let fb = freq[b].0 as f64 / freq[b].1 as f64;
        fa.total_cmp(&fb).then(a.cmp(&b))
    });
    let quintile: HashMap<usize, usize> = order.iter().enumerate().map(|(r, &s)| (s, r * 5 / ns)).collect();
    let mut per = [0usize; 5];
    for &i in &split.test {
        per[quintile[&c.buy[i].subject.index()]] += 1;
    }
    assert_eq!(per, [88; 5]);
}

#[test]
fn between_protocols_hold_out_whole_units() {
    let c = cohort(2);
    for (protocol, unit) in [(Protocol::BetweenSubject, 0), (Protocol::BetweenItem, 1)] {
        let split = SplitSpec::new(protocol, 3).split(&c, 4).unwrap();
        let key = |i: usize| if unit == 0 { c.buy[i].subject.index() } else { c.buy[i].item.index() };
        let held: BTreeSet<usize> = split.test.iter().map(|&i| key(i)).collect();
        let kept: BTreeSet<usize> = split.train.iter().map(|&i| key(i)).collect();
        assert_eq!(held.len(), protocol.default_holdout());
        assert!(held.is_disjoint(&kept));
    }
}

#[test]
fn splits_are_seeded_and_vary_by_repeat() {
    let c = cohort(3);
    let s = SplitSpec::new(Protocol::WithinBetween, 5);
    assert_eq!(s.split(&c, 0).unwrap(), s.split(&c, 0).unwrap());
    assert_ne!(s.split(&c, 0).unwrap(), s.split(&c, 1).unwrap());
    assert_ne!(s.split(&c, 0).unwrap(), SplitSpec::new(Protocol::WithinBetween, 6).split(&c, 0).unwrap());
}

#[test]
fn bad_holdouts_are_rejected() {
    let c = cohort(3);
    let mut s = SplitSpec::new(Protocol::WithinBetween, 5);
    s.holdout_size = 442;
    assert!(matches!(s.split(&c, 0), Err(Error::Split(_))));
    let mut s = SplitSpec::new(Protocol::BetweenItem, 5);
    s.holdout_size = 20;
    assert!(matches!(s.split(&c, 0), Err(Error::Split(_))));
}

#[test]
fn probbuy_scores_match_a_hand_computation() {
    let c = cohort(4);
    let split = SplitSpec::new(Protocol::WithinBetween, 8).with_repeats(3);
    let report = evaluate(&c, &[ModelSpec::prob_buy()], &split, &[Metric::Mse], &quick_opts(8)).unwrap();
    let rec = report.record(&ModelSpec::prob_buy(), None, Metric::Mse).unwrap();
    for r in 0..3 {
        let s = split.split(&c, r).unwrap();
        let rate = s.train.iter().filter(|&&i| c.buy[i].bought).count() as f64 / s.train.len() as f64;
        let want: f64 = s
            .test
            .iter()
            .map(|&i| (rate - c.buy[i].bought as u8 as f64).powi(2))
            .sum::<f64>()
            / s.test.len() as f64;
        assert!((rec.values[r] - want).abs() < 1e-12);
    }
    let mean = rec.values.iter().sum::<f64>() / 3.0;
    assert!((rec.mean() - mean).abs() < 1e-15);
}

#[test]
fn between_item_fits_never_see_item_columns() {
    let c = cohort(5);
    let split = SplitSpec::new(Protocol::BetweenItem, 1).with_repeats(2);
    let specs = [ModelSpec::bdm(), ModelSpec::logit(FeatureSpace::WO), ModelSpec::rf(FeatureSpace::WOA)];
    let report = evaluate(&c, &specs, &split, &[Metric::Mse, Metric::Auc], &quick_opts(1)).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.records.len(), 6);
}

#[test]
fn sweep_reports_every_size() {
    let c = cohort(6);
    let sizes = [600, 1200, 3960];
    let split = SplitSpec::new(Protocol::WithinBetween, 2).with_repeats(2);
    let specs = [ModelSpec::bdm(), ModelSpec::logit(FeatureSpace::W)];
    let report = sample_size_sweep(&c, &specs, &sizes, &split, &[Metric::Mse], &quick_opts(2)).unwrap();
    for s in &specs {
        for &n in &sizes {
            let r = report.record(s, Some(n), Metric::Mse).unwrap();
            assert_eq!(r.size, n);
            assert_eq!(r.n_ok(), 2);
        }
    }
}

#[test]
fn report_rows_round_trip_and_consolidate() {
    let c = cohort(7);
    let split = SplitSpec::new(Protocol::WithinBetween, 3).with_repeats(2);
    let report = evaluate(&c, &[ModelSpec::bdm(), ModelSpec::prob_buy()], &split, &[Metric::Mse], &quick_opts(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    report.write_csv(&path).unwrap();
    let rows = read_report_rows(&path).unwrap();
    assert_eq!(rows, report.rows());

    let table = consolidate(&[rows.clone(), rows.clone()]).unwrap();
    assert_eq!(table.protocols, vec!["within_between".to_string()]);
    assert_eq!(table.rows[0].0, "probbuy");
    assert_eq!(table.rows[1].0, "bdm");

    let mut conflicting = rows.clone();
    conflicting[0].mean += 0.01;
    assert!(matches!(consolidate(&[rows, conflicting]), Err(Error::DuplicateKey(_))));

    let bad = dir.path().join("bad.csv");
    let r = ReportRow {
        model: "bdm".into(),
        space: String::new(),
        protocol: "within_between".into(),
        size: 10,
        metric: "mse".into(),
        mean: 0.1,
        stderr: 0.01,
        n_repeats: 2,
    };
    write_report_rows(&[r], &bad).unwrap();
    let text = std::fs::read_to_string(&bad).unwrap().replace(",10,", ",ten,");
    std::fs::write(&bad, text).unwrap();
    assert!(matches!(read_report_rows(&bad), Err(Error::MalformedRow { line: 2, .. })));
}

#[test]
fn metric_errors() {
    assert!(matches!(mse(&[0.5], &[true, false]), Err(Error::LengthMismatch(1, 2))));
    assert!(mse(&[], &[]).is_err());
    assert!(matches!(auc(&[0.2, 0.4], &[true, true]), Err(Error::SingleClass)));
    assert!(binomial_deviance(&[f64::NAN], &[true]).is_err());
}

fn brute_auc(p: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] && !y[j] {
                den += 1.0;
                num += if p[i] > p[j] { 1.0 } else if p[i] == p[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

proptest! {
    #[test]
    fn metrics_match_brute_force(rows in prop::collection::vec((0u8..=8, any::<bool>()), 2..20)) {
        let p: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 8.0).collect();
        let y: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let m: f64 = p.iter().zip(&y).map(|(a, &b)| (a - b as u8 as f64).powi(2)).sum::<f64>() / p.len() as f64;
        prop_assert!((mse(&p, &y).unwrap() - m).abs() < 1e-12);
        let d: f64 = p.iter().zip(&y).map(|(a, &b)| {
            let q = a.clamp(1e-12, 1.0 - 1e-12);
            -(if b { q.ln() } else { (1.0 - q).ln() })
        }).sum();
        prop_assert!((binomial_deviance(&p, &y).unwrap() - d).abs() < 1e-9);
        if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
            prop_assert_eq!(auc(&p, &y).unwrap(), brute_auc(&p, &y));
        }
    }

    #[test]
    fn auc_is_invariant_to_monotone_transforms(rows in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..30)) {
        let p: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y: Vec<bool> = rows.iter().map(|r| r.1).collect();
        prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
        let q: Vec<f64> = p.iter().map(|v| v.powi(3) * 0.5).collect();
        prop_assert_eq!(auc(&p, &y).unwrap(), auc(&q, &y).unwrap());
    }
}
