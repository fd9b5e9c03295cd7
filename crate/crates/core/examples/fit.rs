//! Fit each learner on one training split, score it on the held-out rows
//! and round-trip a fitted model through JSON.

use demandml::evaluation::metrics::{auc, mse};
use demandml::evaluation::splits::{Protocol, SplitSpec};
use demandml::features::{assemble_space, FeatureSpace};
use demandml::learners::{ForestConfig, LassoConfig};
use demandml::model::{fit_model, FitOptions, ModelSpec, TrainedModel};
use demandml::sim::{simulate_cohort, SimConfig};

fn main() -> demandml::Result<()> {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(3))?;
    let split = SplitSpec::new(Protocol::WithinBetween, 3).split(&c, 0)?;
    let opts = FitOptions {
        seed: 3,
        forest: ForestConfig {
            n_trees: 100,
            mtry_fractions: Some(vec![0.1]),
            min_leaf_grid: vec![5],
            ..ForestConfig::default()
        },
        lasso: LassoConfig::default(),
    };

    let specs = [
        ModelSpec::prob_buy(),
        ModelSpec::bdm(),
        ModelSpec::logit_surplus(),
        ModelSpec::logit(FeatureSpace::W),
        ModelSpec::lasso(FeatureSpace::W),
        ModelSpec::rf(FeatureSpace::WO),
    ];
    let mut last = None;
    for spec in specs {
        let x = assemble_space(&c, spec.matrix_space(), false);
        let t = std::time::Instant::now();
        let model = fit_model(spec, &x.rows(&split.train), false, &opts)?;
        let test = x.rows(&split.test);
        let p = model.predict(&test)?;
        let y = test.outcomes();
        println!(
            "{:<14} mse {:.4}  auc {:.4}  ({:.1}s)",
            spec.to_string(),
            mse(&p, &y)?,
            auc(&p, &y)?,
            t.elapsed().as_secs_f64()
        );
        last = Some((model, p));
    }

    let (model, p) = last.expect("at least one model");
    let path = std::env::temp_dir().join("demandml-example-model.json");
    model.save(&path)?;
    let back = TrainedModel::load(&path)?;
    let x = assemble_space(&c, FeatureSpace::WO, false);
    assert_eq!(back.predict(&x.rows(&split.test))?, p);
    println!("saved and reloaded {} from {}", back.spec, path.display());
    Ok(())
}
