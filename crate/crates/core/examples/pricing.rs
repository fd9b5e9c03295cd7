//! Demand curves and revenue-maximizing prices from a fitted forest,
//! scored against a richer forest standing in for the true demand.

use demandml::features::{assemble_space, FeatureBuilder, FeatureSpace};
use demandml::learners::{ForestConfig, LassoConfig};
use demandml::model::{fit_model, FitOptions, ModelSpec};
use demandml::pricing::{demand_curve, revenue_comparison, revenue_maximizing_price};
use demandml::sim::{simulate_cohort, SimConfig};
use demandml::domain::{ItemId, SubjectId};

fn main() -> demandml::Result<()> {
    let sim = SimConfig {
        wtp_bias: 0.40,
        ..SimConfig::with_seed(21)
    };
    let (c, _) = simulate_cohort(&sim)?;
    let opts = FitOptions {
        seed: 21,
        forest: ForestConfig {
            n_trees: 60,
            mtry_fractions: Some(vec![0.1]),
            min_leaf_grid: vec![5],
            ..ForestConfig::default()
        },
        lasso: LassoConfig::default(),
    };
    let fit = |spec: ModelSpec| {
        let x = assemble_space(&c, spec.matrix_space(), false);
        fit_model(spec, &x.all(), false, &opts)
    };
    let pricing = fit(ModelSpec::rf(FeatureSpace::WO))?;
    let truth = fit(ModelSpec::rf(FeatureSpace::WOA))?;

    let b = FeatureBuilder::new(&c);
    let (s, j) = (SubjectId(0), ItemId(3));
    let curve = demand_curve(&pricing, &b, s, j)?;
    let (p_star, rev) = revenue_maximizing_price(&curve)?;
    println!("subject 0, item 3 (stated WTP ${:.2})", b.wtp(s, j).dollars());
    for (p, q) in curve.grid.iter().step_by(2) {
        println!("  ${:.2}  P(buy) {:.3}", p.dollars(), q);
    }
    match curve.reservation_value() {
        Some(rv) => println!("  reservation value ${:.3} ({} crossings)", rv.dollars, rv.n_crossings),
        None => println!("  curve never crosses 0.5"),
    }
    println!("  p* ${:.2}, expected revenue ${rev:.3}", p_star.dollars());

    let rep = revenue_comparison(&pricing, &truth, &c)?;
    let s = rep.summary;
    println!(
        "\n{} pairs: revenue ${:.3} at WTP, ${:.3} at p* ({:+.1}%), {:.1}% of pairs gain",
        s.n_pairs,
        s.mean_rev_wtp,
        s.mean_rev_star,
        s.gain_pct,
        100.0 * s.share_positive_gain
    );
    println!("corr(p*, WTP) {:.3}, mean p* - WTP ${:.3}", s.corr_p_star_wtp, s.mean_diff_dollars);
    Ok(())
}
