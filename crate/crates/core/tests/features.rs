use demandml::features::{assemble_space, FeatureSpace};
use demandml::sim::{simulate_cohort, SimConfig};

fn cohort() -> demandml::domain::Cohort {
    simulate_cohort(&SimConfig::with_seed(2)).unwrap().0
}

#[test]
fn column_counts_for_the_default_cohort() {
    let c = cohort();
    let want = [149, 225, 625, 360, 447, 436, 836, 923];
    for (space, n) in FeatureSpace::ALL.into_iter().zip(want) {
        assert_eq!(assemble_space(&c, space, false).n_cols(), n, "{space}");
    }
}

#[test]
fn nested_spaces_share_their_columns() {
    let c = cohort();
    let names = |s| assemble_space(&c, s, false).column_names;
    let pairs = [
        (FeatureSpace::C, FeatureSpace::W),
        (FeatureSpace::W, FeatureSpace::WO),
        (FeatureSpace::A, FeatureSpace::AR),
        (FeatureSpace::WA, FeatureSpace::WOA),
        (FeatureSpace::WOA, FeatureSpace::WOAR),
    ];
    for (small, big) in pairs {
        let b = names(big);
        for n in names(small) {
            assert!(b.contains(&n), "{n} of {small} missing from {big}");
        }
    }
}

#[test]
fn rows_follow_buy_order() {
    let c = cohort();
    let x = assemble_space(&c, FeatureSpace::WOA, false);
    assert_eq!(x.n_rows(), c.buy.len());
    for (m, b) in x.meta.iter().zip(&c.buy) {
        assert_eq!((m.subject, m.item, m.price, m.trial_index), (b.subject, b.item, b.price, b.trial_index));
    }
    assert_eq!(x.outcome, c.buy.iter().map(|b| b.bought).collect::<Vec<_>>());
}

#[test]
fn wtp_column_matches_stated_wtp() {
    let c = cohort();
    let x = assemble_space(&c, FeatureSpace::W, false);
    let j = x.column_index("wtp").expect("wtp column");
    let table = c.wtp_table();
    for (i, b) in c.buy.iter().enumerate() {
        assert_eq!(x.get(i, j), c.wtp_for(&table, b.subject, b.item).dollars());
    }
}

#[test]
fn dropping_item_effects_removes_exactly_the_flagged_columns() {
    let c = cohort();
    for space in FeatureSpace::ALL {
        let full = assemble_space(&c, space, false);
        let dropped = assemble_space(&c, space, true);
        let kept: Vec<&String> = full
            .column_names
            .iter()
            .zip(&full.item_indexed)
            .filter(|(_, &f)| !f)
            .map(|(n, _)| n)
            .collect();
        assert_eq!(dropped.column_names.iter().collect::<Vec<_>>(), kept, "{space}");
        assert!(dropped.item_indexed.iter().all(|f| !f));
        assert!(!dropped.column_names.iter().any(|n| n.starts_with("item_") || n.contains("_x_item_")));
    }
}

#[test]
fn no_constant_or_non_finite_values() {
    let c = cohort();
    let x = assemble_space(&c, FeatureSpace::WOAR, false);
    assert!(x.data.iter().all(|v| v.is_finite()));
}
