use std::fs;

use demandml::domain::{load_cohort, save_cohort, validate_cohort, Money, BUY_CSV, SUBJECTS_CSV, WTP_CSV};
use demandml::sim::{simulate_cohort, SimConfig};
use demandml::Error;
use proptest::prelude::*;

#[test]
fn default_cohort_cardinalities() {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(0)).unwrap();
    assert_eq!((c.n_subjects(), c.n_items()), (55, 20));
    assert_eq!((c.wtp.len(), c.afc.len(), c.buy.len()), (1100, 10450, 4400));
    assert!(validate_cohort(&c).is_empty());
}

#[test]
fn simulation_is_seed_deterministic() {
    let a = simulate_cohort(&SimConfig::with_seed(42)).unwrap().0;
    let b = simulate_cohort(&SimConfig::with_seed(42)).unwrap().0;
    let c = simulate_cohort(&SimConfig::with_seed(43)).unwrap().0;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn missing_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _) = simulate_cohort(&SimConfig::with_seed(1)).unwrap();
    save_cohort(&c, dir.path()).unwrap();
    fs::remove_file(dir.path().join(BUY_CSV)).unwrap();
    match load_cohort(dir.path()) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with(BUY_CSV)),
        other => panic!("expected MissingFile, got {other:?}"),
    }
}

#[test]
fn malformed_row_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _) = simulate_cohort(&SimConfig::with_seed(1)).unwrap();
    save_cohort(&c, dir.path()).unwrap();
    let path = dir.path().join(WTP_CSV);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Off-lattice WTP on the third data row.
    let fields: Vec<&str> = lines[3].split(',').collect();
    let mut bad: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
    let pos = text.lines().next().unwrap().split(',').position(|h| h == "wtp_cents").unwrap();
    bad[pos] = "130".into();
    lines[3] = bad.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match load_cohort(dir.path()) {
        Err(Error::MalformedRow { file, line, .. }) => {
            assert!(file.ends_with(WTP_CSV));
            assert_eq!(line, 4);
        }
        other => panic!("expected MalformedRow, got {other:?}"),
    }
}

#[test]
fn dangling_reference_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _) = simulate_cohort(&SimConfig::with_seed(1)).unwrap();
    save_cohort(&c, dir.path()).unwrap();
    let path = dir.path().join(SUBJECTS_CSV);
    let text = fs::read_to_string(&path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let gold = header.iter().position(|h| *h == "gold_item").unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut f: Vec<String> = lines[1].split(',').map(String::from).collect();
    f[gold] = "999".into();
    lines[1] = f.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match load_cohort(dir.path()) {
        Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.contains("999"))),
        other => panic!("expected Validation, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip(seed in any::<u64>(), subjects in 6usize..14, items in 3usize..8) {
        let cfg = SimConfig { n_subjects: subjects, n_items: items, ..SimConfig::with_seed(seed) };
        let (c, _) = simulate_cohort(&cfg).unwrap();
        prop_assert!(validate_cohort(&c).is_empty());
        let dir = tempfile::tempdir().unwrap();
        save_cohort(&c, dir.path()).unwrap();
        prop_assert_eq!(load_cohort(dir.path()).unwrap(), c);
    }

    #[test]
    fn rounding_stays_on_lattice(d in -10.0f64..20.0) {
        let m = Money::round_dollars(d, 575);
        prop_assert_eq!(m.cents() % 25, 0);
        prop_assert!(m.cents() <= 575);
        if (0.0..=5.75).contains(&d) {
            prop_assert!((m.dollars() - d).abs() <= 0.125 + 1e-12);
        }
    }
}
