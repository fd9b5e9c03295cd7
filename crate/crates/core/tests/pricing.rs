use demandml::domain::{ItemId, Money, SubjectId};
use demandml::features::{assemble_space, FeatureBuilder, FeatureSpace};
use demandml::model::{fit_model, FitOptions, ModelSpec};
use demandml::pricing::{demand_curve, price_lattice, revenue_comparison, revenue_maximizing_price, DemandCurve};
use demandml::sim::{simulate_cohort, SimConfig};
use proptest::prelude::*;

proptest! {
    #[test]
    fn argmax_beats_every_lattice_price(probs in prop::collection::vec(0.0f64..=1.0, 23)) {
        let curve = DemandCurve {
            subject: SubjectId(0),
            item: ItemId(0),
            grid: price_lattice().into_iter().zip(probs.iter().copied()).collect(),
        };
        let (p_star, rev) = revenue_maximizing_price(&curve).unwrap();
        for (p, q) in &curve.grid {
            let r = p.dollars() * q;
            prop_assert!(r <= rev);
            if r == rev {
                prop_assert!(*p >= p_star);
            }
        }
    }
}

#[test]
fn bdm_curve_is_a_step_at_stated_wtp() {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(1)).unwrap();
    let x = assemble_space(&c, FeatureSpace::C, false);
    let m = fit_model(ModelSpec::bdm(), &x.all(), false, &FitOptions::default()).unwrap();
    let b = FeatureBuilder::new(&c);
    for s in 0..5 {
        for j in 0..20 {
            let (s, j) = (SubjectId(s), ItemId(j));
            let wtp = b.wtp(s, j);
            let curve = demand_curve(&m, &b, s, j).unwrap();
            assert_eq!(curve.monotonicity_violations(), 0);
            for (p, q) in &curve.grid {
                let want = if *p < wtp { 1.0 } else if *p > wtp { 0.0 } else { q.to_owned() };
                assert_eq!(*q, want);
            }
            // A step curve is priced at the highest price still bought for sure,
            // or at the WTP itself when it is bought there often enough.
            let (p_star, _) = revenue_maximizing_price(&curve).unwrap();
            assert!(p_star <= wtp || wtp == Money::ZERO);
        }
    }
}

#[test]
fn self_pricing_never_loses_revenue() {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(2)).unwrap();
    let spec = ModelSpec::logit(FeatureSpace::W);
    let x = assemble_space(&c, FeatureSpace::W, false);
    let m = fit_model(spec, &x.all(), false, &FitOptions::default()).unwrap();
    let rep = revenue_comparison(&m, &m, &c).unwrap();
    assert_eq!(rep.summary.n_pairs, 1100);
    assert_eq!(rep.summary.share_nonnegative_gain, 1.0);
    assert!(rep.summary.gain_pct >= 0.0);
    for r in &rep.results {
        assert!(r.rev_star >= r.rev_wtp);
    }
}

#[test]
fn pricing_csv_has_one_row_per_pair() {
    let (c, _) = simulate_cohort(&SimConfig { n_subjects: 8, n_items: 5, ..SimConfig::with_seed(3) }).unwrap();
    let x = assemble_space(&c, FeatureSpace::C, false);
    let m = fit_model(ModelSpec::bdm(), &x.all(), false, &FitOptions::default()).unwrap();
    let rep = revenue_comparison(&m, &m, &c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pricing.csv");
    rep.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 1 + 40);
    assert!(text.starts_with("subject_id,item_id,wtp_cents,p_star_cents,rev_wtp,rev_star"));
}
