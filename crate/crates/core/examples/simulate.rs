//! Simulate a 55-subject cohort and write it as CSV.
//!
//! cargo run --example simulate -- [out_dir] [seed]

use demandml::domain::{load_cohort, save_cohort, validate_cohort};
use demandml::sim::{simulate_cohort, SimConfig};

fn main() -> demandml::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("demandml-example-cohort"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let (cohort, truth) = simulate_cohort(&SimConfig::with_seed(seed))?;
    println!(
        "{} subjects, {} items: {} wtp, {} 2afc, {} buy rows",
        cohort.n_subjects(),
        cohort.n_items(),
        cohort.wtp.len(),
        cohort.afc.len(),
        cohort.buy.len()
    );
    let rate = cohort.buy.iter().filter(|b| b.bought).count() as f64 / cohort.buy.len() as f64;
    println!("purchase rate {rate:.3}");

    let s0 = &cohort.subjects[0];
    println!(
        "subject 0: gold item {} (value {:.2}), silver item {} (value {:.2})",
        cohort.items[s0.gold_item.index()].abbrev,
        truth.value(s0.id, s0.gold_item),
        cohort.items[s0.silver_item.index()].abbrev,
        truth.value(s0.id, s0.silver_item)
    );

    save_cohort(&cohort, &out)?;
    let back = load_cohort(&out)?;
    assert!(validate_cohort(&back).is_empty());
    assert_eq!(back, cohort);
    println!("wrote and re-read {}", out.display());
    Ok(())
}
