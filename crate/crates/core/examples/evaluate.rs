//! Repeated-holdout evaluation under each of the three protocols.

use demandml::evaluation::report::{evaluate, Metric};
use demandml::evaluation::splits::{Protocol, SplitSpec};
use demandml::features::FeatureSpace;
use demandml::learners::{ForestConfig, LassoConfig};
use demandml::model::{FitOptions, ModelSpec};
use demandml::sim::{simulate_cohort, SimConfig};

fn main() -> demandml::Result<()> {
    let repeats = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let (c, _) = simulate_cohort(&SimConfig::with_seed(11))?;
    let opts = FitOptions {
        seed: 11,
        forest: ForestConfig {
            n_trees: 50,
            mtry_fractions: Some(vec![0.1]),
            min_leaf_grid: vec![5],
            ..ForestConfig::default()
        },
        lasso: LassoConfig::default(),
    };
    let specs = [
        ModelSpec::prob_buy(),
        ModelSpec::bdm(),
        ModelSpec::logit(FeatureSpace::W),
        ModelSpec::rf(FeatureSpace::WO),
        ModelSpec::rf(FeatureSpace::A),
    ];
    for protocol in Protocol::ALL {
        let split = SplitSpec::new(protocol, 11).with_repeats(repeats);
        let report = evaluate(&c, &specs, &split, &[Metric::Mse, Metric::Auc], &opts)?;
        println!("{protocol} ({repeats} repeats, holdout {})", split.holdout_size);
        for r in &report.records {
            println!(
                "  {:<10} {:<4} {:.4} ({:.4})",
                r.model.to_string(),
                r.metric.to_string(),
                r.mean(),
                r.stderr()
            );
        }
        for f in &report.failures {
            println!("  failed: {} repeat {}: {}", f.model, f.repeat, f.message);
        }
    }
    Ok(())
}
