//! Test MSE as the training set grows, for BDM and a forest on WO.

use demandml::evaluation::report::{sample_size_sweep, Metric};
use demandml::evaluation::splits::{Protocol, SplitSpec};
use demandml::features::FeatureSpace;
use demandml::learners::{ForestConfig, LassoConfig};
use demandml::model::{FitOptions, ModelSpec};
use demandml::sim::{simulate_cohort, SimConfig};

fn main() -> demandml::Result<()> {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(5))?;
    let opts = FitOptions {
        seed: 5,
        forest: ForestConfig {
            n_trees: 40,
            mtry_fractions: Some(vec![0.1]),
            min_leaf_grid: vec![5],
            ..ForestConfig::default()
        },
        lasso: LassoConfig::default(),
    };
    let specs = [ModelSpec::bdm(), ModelSpec::rf(FeatureSpace::WO)];
    let sizes = [600, 1400, 2200, 3000, 3960];
    let split = SplitSpec::new(Protocol::WithinBetween, 5).with_repeats(4);
    let report = sample_size_sweep(&c, &specs, &sizes, &split, &[Metric::Mse], &opts)?;

    println!("{:>6} {:>16} {:>16}", "size", "bdm", "rf(WO)");
    for &n in &sizes {
        let cell = |s: &ModelSpec| {
            report
                .record(s, Some(n), Metric::Mse)
                .map(|r| format!("{:.4} ({:.4})", r.mean(), r.stderr()))
                .unwrap_or_default()
        };
        println!("{n:>6} {:>16} {:>16}", cell(&specs[0]), cell(&specs[1]));
    }
    Ok(())
}
