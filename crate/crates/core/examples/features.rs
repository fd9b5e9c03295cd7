//! Assemble every feature space for one cohort and show what goes into it.

use demandml::features::{assemble_space, FeatureSpace};
use demandml::sim::{simulate_cohort, SimConfig};

fn main() -> demandml::Result<()> {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(1))?;
    println!("{:<6} {:>8} {:>14} {:>18}", "space", "columns", "item-indexed", "cols w/o item FE");
    for space in FeatureSpace::ALL {
        let x = assemble_space(&c, space, false);
        let dropped = assemble_space(&c, space, true);
        let flagged = x.item_indexed.iter().filter(|&&f| f).count();
        println!("{:<6} {:>8} {:>14} {:>18}", space.to_string(), x.n_cols(), flagged, dropped.n_cols());
    }

    let x = assemble_space(&c, FeatureSpace::WOA, false);
    let sample: Vec<&str> = x
        .column_names
        .iter()
        .step_by(97)
        .map(String::as_str)
        .collect();
    println!("\nsome WOA columns: {}", sample.join(", "));
    let m = &x.meta[0];
    println!(
        "row 0: subject {}, item {}, price ${:.2}, wtp ${:.2}, bought {}",
        m.subject.0,
        m.item.0,
        m.price.dollars(),
        m.wtp.dollars(),
        x.outcome[0]
    );
    Ok(())
}
