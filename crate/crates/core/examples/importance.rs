//! Permutation and Gini importance of a forest fit on the WOA space.

use demandml::features::{assemble_space, FeatureSpace};
use demandml::learners::{fit_random_forest, variable_importance, ForestConfig};
use demandml::sim::{simulate_cohort, SimConfig};

fn main() -> demandml::Result<()> {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(9))?;
    let x = assemble_space(&c, FeatureSpace::WOA, false);
    let rows = x.all();
    let cfg = ForestConfig {
        n_trees: 80,
        mtry_fractions: Some(vec![0.1]),
        min_leaf_grid: vec![5],
        ..ForestConfig::default()
    };
    let forest = fit_random_forest(&rows, &cfg, 9)?;
    println!(
        "{} trees, mtry {}, min_leaf {}, oob mse {:.4}",
        forest.n_trees,
        forest.mtry,
        forest.min_leaf,
        forest.oob_error.unwrap_or(f64::NAN)
    );

    let mut imp = variable_importance(&forest, &rows, 9)?;
    imp.sort_by(|a, b| b.mean_decrease_accuracy.total_cmp(&a.mean_decrease_accuracy));
    println!("\n{:<28} {:>10} {:>10} {:>10}", "column", "perm", "sd", "gini");
    for i in imp.iter().take(15) {
        println!(
            "{:<28} {:>10.5} {:>10.5} {:>10.3}",
            i.column, i.mean_decrease_accuracy, i.accuracy_sd, i.mean_decrease_gini
        );
    }
    Ok(())
}
