//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! `DEMANDML_ACCEPTANCE_SEED` overrides the seed; `DEMANDML_ACCEPTANCE_ONLY`
//! takes a comma list of criterion numbers.

use demandml::acceptance::{run_selected, AcceptanceConfig};

fn main() {
    let seed = std::env::var("DEMANDML_ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let only: Option<Vec<u8>> = std::env::var("DEMANDML_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let cfg = AcceptanceConfig::standard(seed);
    let results = run_selected(&cfg, only.as_deref(), |r| println!("{r}"));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
