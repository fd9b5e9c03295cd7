//! BDM bias offset, purchase rates by surplus and trial-order trends.

use demandml::domain::Money;
use demandml::evaluation::diagnostics::demand_trend_diagnostics;
use demandml::features::{assemble_space, FeatureSpace};
use demandml::learners::{debias_bdm_offset, fit_bdm};
use demandml::sim::{simulate_cohort, SimConfig};
use std::collections::BTreeMap;

fn main() -> demandml::Result<()> {
    let sim = SimConfig {
        wtp_bias: 0.40,
        wtp_noise_sd: 0.35,
        buy_noise_sd: 0.25,
        wtp_drift_per_trial: 0.002,
        ..SimConfig::with_seed(4)
    };
    let (c, _) = simulate_cohort(&sim)?;
    let x = assemble_space(&c, FeatureSpace::C, false);
    let rows = x.all();

    let mut by_surplus: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for k in 0..rows.len() {
        let e = by_surplus.entry(rows.meta(k).surplus_cents()).or_default();
        e.0 += 1;
        e.1 += rows.outcome(k) as usize;
    }
    println!("surplus  rows  P(buy)");
    for (s, (n, b)) in by_surplus.range(-100..=100) {
        println!("{:>+7.2} {:>5}  {:.3}", *s as f64 / 100.0, n, *b as f64 / *n as f64);
    }

    let bdm = fit_bdm(&rows);
    println!("\nBDM purchase rate at price = WTP: {:.3}", bdm.q);
    let offsets: Vec<Money> = (0..=4).map(|k| Money::from_cents(25 * k)).collect::<demandml::Result<_>>()?;
    let x_best = debias_bdm_offset(&rows, &offsets)?;
    println!("best WTP offset: ${:.2}", x_best.dollars());

    let t = demand_trend_diagnostics(&c)?;
    println!(
        "\nWTP trend per trial {:+.5} (z {:.2}, p {:.3})",
        t.wtp.coef, t.wtp.z, t.wtp.p_value
    );
    println!("Buy trend per trial {:+.5} (z {:.2}, p {:.3})", t.buy.coef, t.buy.z, t.buy.p_value);
    Ok(())
}
