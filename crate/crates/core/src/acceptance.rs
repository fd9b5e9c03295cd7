//! The acceptance criteria, runnable from the library, the CLI and the
//! `acceptance` test target. Tolerances are fixed here.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{ItemId, Money, SubjectId};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{auc, binomial_deviance, mse};
use crate::evaluation::report::{evaluate, sample_size_sweep, default_sweep_sizes, EvalReport, Matrices, Metric, MetricRecord};
use crate::evaluation::splits::{Protocol, SplitSpec};
use crate::features::{assemble_space, FeatureMatrix, FeatureSpace, RowMeta};
use crate::learners::{debias_bdm_offset, fit_lasso_fixed, fit_logit, fit_random_forest, ForestConfig, LassoConfig};
use crate::model::{fit_model, FitOptions, ModelSpec};
use crate::pricing::revenue_comparison;
use crate::rng::derive_seed;
use crate::sim::{simulate_cohort, SimConfig};

pub const EXPECTED_COLUMNS: [(FeatureSpace, usize); 8] = [
    (FeatureSpace::C, 149),
    (FeatureSpace::W, 225),
    (FeatureSpace::WO, 625),
    (FeatureSpace::A, 360),
    (FeatureSpace::AR, 447),
    (FeatureSpace::WA, 436),
    (FeatureSpace::WOA, 836),
    (FeatureSpace::WOAR, 923),
];

const METRIC_INSTANCES: usize = 200;
const METRIC_TOL: f64 = 1e-12;
const LASSO_NULL_TOL: f64 = 1e-10;
const LASSO_IRLS_TOL: f64 = 1e-3;
const FOREST_BASE_RATE_TOL: f64 = 1e-3;
const BIAS_DOLLARS: f64 = 0.40;
/// Understatement of the cohorts priced in the pricing criterion, with WTP
/// and buy noise small next to it.
const PRICING_BIAS_DOLLARS: f64 = 1.00;
const PRICING_WTP_NOISE: f64 = 0.20;
const PRICING_BUY_NOISE: f64 = 0.10;
const MIN_INDIFFERENCE_RATE: f64 = 0.55;
const MIN_BIAS_AGREEMENT: usize = 8;
const GAP_SE: f64 = 2.0;
const MIN_POSITIVE_GAIN_SHARE: f64 = 0.80;

#[derive(Debug, Clone)]
pub struct AcceptanceConfig {
    pub seed: u64,
    /// Forest settings for every criterion that fits forests on full cohorts.
    pub forest: ForestConfig,
    pub ordering_seeds: usize,
    pub ordering_repeats: usize,
    pub sweep_repeats: usize,
    pub bias_seeds: usize,
    pub pricing_seeds: usize,
    /// Forests behind the demand curves of the pricing criterion.
    pub pricing_forest: ForestConfig,
}

impl AcceptanceConfig {
    /// The configuration the acceptance suite runs with. Forests are smaller
    /// than the library default so that the full suite fits in well under an
    /// hour on one core.
    pub fn standard(seed: u64) -> AcceptanceConfig {
        AcceptanceConfig {
            seed,
            forest: ForestConfig {
                n_trees: 60,
                mtry_grid: None,
                mtry_fractions: Some(vec![0.1]),
                min_leaf_grid: vec![5],
                bootstrap: true,
            },
            ordering_seeds: 3,
            ordering_repeats: 50,
            sweep_repeats: 20,
            bias_seeds: 10,
            pricing_seeds: 10,
            pricing_forest: ForestConfig {
                n_trees: 60,
                mtry_grid: None,
                mtry_fractions: Some(vec![1.0 / 3.0]),
                min_leaf_grid: vec![5],
                bootstrap: true,
            },
        }
    }

    fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            seed,
            forest: self.forest.clone(),
            lasso: LassoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {} ({:.0}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "feature-count exactness"),
    (2, "metric oracles"),
    (3, "learner limit cases"),
    (4, "bias recovery"),
    (5, "ordering reproduction"),
    (6, "sweep behavior"),
    (7, "pricing"),
    (8, "determinism and leakage"),
];

pub fn run_criterion(cfg: &AcceptanceConfig, id: u8) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .unwrap_or("unknown criterion");
    let t = Instant::now();
    let outcome = match id {
        1 => feature_counts(cfg),
        2 => metric_oracles(cfg),
        3 => learner_limits(cfg),
        4 => bias_recovery(cfg),
        5 => ordering(cfg),
        6 => sweep_behavior(cfg),
        7 => pricing(cfg),
        8 => determinism_and_leakage(cfg),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    };
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Runs the selected criteria (all when `only` is `None`) in order, reporting
/// each result as soon as it is known.
pub fn run_selected(
    cfg: &AcceptanceConfig,
    only: Option<&[u8]>,
    mut on_result: impl FnMut(&CriterionResult),
) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|(id, _)| only.is_none_or(|o| o.contains(id)))
        .map(|&(id, _)| {
            let r = run_criterion(cfg, id);
            on_result(&r);
            r
        })
        .collect()
}

type Outcome = Result<(bool, String)>;

fn feature_counts(cfg: &AcceptanceConfig) -> Outcome {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(cfg.seed))?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (space, want) in EXPECTED_COLUMNS {
        let got = assemble_space(&c, space, false).n_cols();
        ok &= got == want;
        parts.push(format!("{space}={got}"));
    }
    Ok((ok, parts.join(" ")))
}

fn brute_mse(p: &[f64], y: &[bool]) -> f64 {
    // Expanded square, summed in a different order from the library.
    let (mut pp, mut py, mut yy) = (0.0, 0.0, 0.0);
    for (a, &b) in p.iter().zip(y).rev() {
        let t = if b { 1.0 } else { 0.0 };
        pp += a * a;
        py += a * t;
        yy += t;
    }
    (pp - 2.0 * py + yy) / p.len() as f64
}

fn brute_deviance(p: &[f64], y: &[bool]) -> f64 {
    let mut s = 0.0;
    for (a, &b) in p.iter().zip(y) {
        let q = a.max(1e-12).min(1.0 - 1e-12);
        s -= if b { q.ln() } else { (1.0 - q).ln() };
    }
    s
}

/// Twice the number of correctly ordered positive-negative pairs plus ties.
fn brute_auc_pairs(p: &[f64], y: &[bool]) -> (u64, u64) {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] && !y[j] {
                pairs += 1;
                twice += if p[i] > p[j] {
                    2
                } else if p[i] == p[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    (twice, 2 * pairs)
}

fn metric_oracles(cfg: &AcceptanceConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2]));
    let (mut worst_mse, mut worst_dev, mut auc_mismatch, mut auc_checked) = (0.0f64, 0.0f64, 0usize, 0usize);
    for k in 0..METRIC_INSTANCES {
        let n = rng.random_range(1..=20usize);
        let coarse = k % 2 == 0;
        let p: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if coarse {
                    (u * 4.0).round() / 4.0
                } else {
                    u
                }
            })
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        worst_mse = worst_mse.max((mse(&p, &y)? - brute_mse(&p, &y)).abs());
        let d = binomial_deviance(&p, &y)?;
        let bd = brute_deviance(&p, &y);
        worst_dev = worst_dev.max((d - bd).abs());
        if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
            auc_checked += 1;
            let (num, den) = brute_auc_pairs(&p, &y);
            if auc(&p, &y)? != num as f64 / den as f64 {
                auc_mismatch += 1;
            }
        }
    }
    let ok = worst_mse <= METRIC_TOL && worst_dev <= METRIC_TOL && auc_mismatch == 0;
    Ok((
        ok,
        format!(
            "{METRIC_INSTANCES} instances; max |dMSE| {worst_mse:.1e}, max |dDeviance| {worst_dev:.1e}, \
             AUC exact on {auc_checked}/{auc_checked} two-class instances with {auc_mismatch} mismatches"
        ),
    ))
}

/// Dense matrix with placeholder row meta, for learner checks on synthetic data.
pub fn plain_matrix(names: Vec<String>, data: Vec<f64>, outcome: Vec<bool>) -> FeatureMatrix {
    let n = outcome.len();
    let meta = RowMeta {
        subject: SubjectId(0),
        item: ItemId(0),
        price: Money::ZERO,
        wtp: Money::ZERO,
        trial_index: 0,
    };
    FeatureMatrix {
        item_indexed: vec![false; names.len()],
        column_names: names,
        data,
        outcome,
        meta: vec![meta; n],
        n_subjects: 1,
        n_items: 1,
    }
}

fn learner_limits(cfg: &AcceptanceConfig) -> Outcome {
    let (c, _) = simulate_cohort(&SimConfig::with_seed(cfg.seed))?;
    let x = assemble_space(&c, FeatureSpace::W, false);
    let rows = x.all();
    let base = rows.outcomes().iter().filter(|&&b| b).count() as f64 / rows.len() as f64;

    let null = fit_lasso_fixed(&rows, 1e6, &LassoConfig::default())?;
    let null_dev = null.predict(&rows)?.iter().map(|p| (p - base).abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3]));
    let (n, p) = (600, 5);
    let beta = [0.8, -0.6, 0.4, 0.0, -0.3];
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = 0.2;
        for b in beta {
            let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
            data.push(v * 1.5);
            eta += b * v * 1.5;
        }
        y.push(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
    }
    let toy = plain_matrix((0..p).map(|j| format!("x{j}")).collect(), data, y);
    let irls = fit_logit(&toy.all())?.raw_coefficients();
    let lasso0 = fit_lasso_fixed(&toy.all(), 0.0, &LassoConfig::default())?.raw_coefficients();
    let mut sq = (irls.0 - lasso0.0).powi(2);
    for (a, b) in irls.1.iter().zip(&lasso0.1) {
        sq += (a.1 - b.1).powi(2);
    }
    let lasso_gap = sq.sqrt();

    let big_leaf = ForestConfig {
        n_trees: 500,
        mtry_grid: None,
        mtry_fractions: None,
        min_leaf_grid: vec![rows.len()],
        bootstrap: true,
    };
    let f = fit_random_forest(&rows, &big_leaf, derive_seed(cfg.seed, &[3, 1]))?;
    let rf_dev = f.predict(&rows)?.iter().map(|p| (p - base).abs()).fold(0.0, f64::max);

    let ok = null_dev < LASSO_NULL_TOL && lasso_gap < LASSO_IRLS_TOL && rf_dev < FOREST_BASE_RATE_TOL;
    Ok((
        ok,
        format!(
            "lasso(lambda=1e6) max |p - base| {null_dev:.1e}; |lasso(0) - IRLS| {lasso_gap:.1e}; \
             rf(min_leaf=n) max |p - base| {rf_dev:.1e}"
        ),
    ))
}

fn bias_recovery(cfg: &AcceptanceConfig) -> Outcome {
    let offsets: Vec<Money> = [0, 25, 50].iter().map(|&c| Money::from_cents(c)).collect::<Result<_>>()?;
    let mut agree = 0;
    let mut min_rate = f64::INFINITY;
    let mut picks = Vec::new();
    for k in 0..cfg.bias_seeds {
        let sim = SimConfig {
            wtp_bias: BIAS_DOLLARS,
            wtp_noise_sd: 0.35,
            buy_noise_sd: 0.25,
            ..SimConfig::with_seed(derive_seed(cfg.seed, &[4, k as u64]))
        };
        let (c, _) = simulate_cohort(&sim)?;
        let x = assemble_space(&c, FeatureSpace::C, false);
        let rows = x.all();
        let (mut n0, mut b0) = (0usize, 0usize);
        for r in 0..rows.len() {
            if rows.meta(r).surplus_cents() == 0 {
                n0 += 1;
                b0 += rows.outcome(r) as usize;
            }
        }
        min_rate = min_rate.min(b0 as f64 / n0.max(1) as f64);
        let x_best = debias_bdm_offset(&rows, &offsets)?;
        picks.push(x_best.cents());
        if x_best.cents() == 25 || x_best.cents() == 50 {
            agree += 1;
        }
    }
    let ok = min_rate > MIN_INDIFFERENCE_RATE && agree >= MIN_BIAS_AGREEMENT && cfg.bias_seeds >= 10;
    Ok((
        ok,
        format!(
            "min purchase rate at zero surplus {min_rate:.3}; offset in {{25,50}} on {agree}/{} seeds (picks {picks:?})",
            cfg.bias_seeds
        ),
    ))
}

fn summary(r: &MetricRecord) -> (f64, f64) {
    (r.mean(), r.stderr())
}

fn get(report: &EvalReport, spec: ModelSpec) -> Result<(f64, f64)> {
    report
        .record(&spec, None, Metric::Mse)
        .map(summary)
        .ok_or_else(|| Error::Config(format!("no record for {spec}")))
}

/// `hi` exceeds `lo` by more than two combined standard errors.
fn gap(hi: (f64, f64), lo: (f64, f64)) -> (bool, f64) {
    let se = (hi.1 * hi.1 + lo.1 * lo.1).sqrt();
    let z = (hi.0 - lo.0) / se;
    (z > GAP_SE, z)
}

fn ordering(cfg: &AcceptanceConfig) -> Outcome {
    use FeatureSpace::*;
    let within_specs = [
        ModelSpec::prob_buy(),
        ModelSpec::bdm(),
        ModelSpec::logit(W),
        ModelSpec::rf(WO),
        ModelSpec::rf(A),
        ModelSpec::rf(WOA),
    ];
    let between_specs = [ModelSpec::rf(WO), ModelSpec::rf(A)];
    let mut all_ok = cfg.ordering_seeds >= 3 && cfg.ordering_repeats >= 50;
    let mut lines = Vec::new();
    for k in 0..cfg.ordering_seeds {
        let seed = derive_seed(cfg.seed, &[5, k as u64]);
        let (c, _) = simulate_cohort(&SimConfig::with_seed(seed))?;
        let opts = cfg.fit_options(seed);
        let within = evaluate(
            &c,
            &within_specs,
            &SplitSpec::new(Protocol::WithinBetween, seed).with_repeats(cfg.ordering_repeats),
            &[Metric::Mse],
            &opts,
        )?;
        let between = evaluate(
            &c,
            &between_specs,
            &SplitSpec::new(Protocol::BetweenSubject, seed).with_repeats(cfg.ordering_repeats),
            &[Metric::Mse],
            &opts,
        )?;
        let pb = get(&within, within_specs[0])?;
        let bdm = get(&within, within_specs[1])?;
        let lw = get(&within, within_specs[2])?;
        let wo = get(&within, within_specs[3])?;
        let a = get(&within, within_specs[4])?;
        let woa = get(&within, within_specs[5])?;
        let wo_b = get(&between, between_specs[0])?;
        let a_b = get(&between, between_specs[1])?;
        let best_single = if wo.0 <= a.0 { wo } else { a };
        // Relative inflation with delta-method standard errors.
        let infl = |b: (f64, f64), w: (f64, f64)| {
            let r = b.0 / w.0;
            (r - 1.0, r * ((b.1 / b.0).powi(2) + (w.1 / w.0).powi(2)).sqrt())
        };
        let (ia, iwo) = (infl(a_b, a), infl(wo_b, wo));
        let checks = [
            ("probbuy>bdm", gap(pb, bdm)),
            ("bdm>logit(W)", gap(bdm, lw)),
            ("logit(W)>rf(WO)", gap(lw, wo)),
            ("min(rf(WO),rf(A))>rf(WOA)", gap(best_single, woa)),
            ("inflation A>WO", gap(ia, iwo)),
        ];
        let ok = checks.iter().all(|c| c.1 .0);
        all_ok &= ok;
        lines.push(format!(
            "seed#{k}: probbuy {:.4} bdm {:.4} logit(W) {:.4} rf(WO) {:.4} rf(A) {:.4} rf(WOA) {:.4}; \
             between rf(WO) {:+.1}% rf(A) {:+.1}%; gaps(z) {}",
            pb.0,
            bdm.0,
            lw.0,
            wo.0,
            a.0,
            woa.0,
            100.0 * iwo.0,
            100.0 * ia.0,
            checks
                .iter()
                .map(|(n, (ok, z))| format!("{n}={z:.1}{}", if *ok { "" } else { "!" }))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    Ok((all_ok, lines.join(" | ")))
}

fn sweep_behavior(cfg: &AcceptanceConfig) -> Outcome {
    let seed = derive_seed(cfg.seed, &[6]);
    let (c, _) = simulate_cohort(&SimConfig::with_seed(seed))?;
    let specs = [ModelSpec::bdm(), ModelSpec::rf(FeatureSpace::WO)];
    let sizes = default_sweep_sizes();
    let rep = sample_size_sweep(
        &c,
        &specs,
        &sizes,
        &SplitSpec::new(Protocol::WithinBetween, seed).with_repeats(cfg.sweep_repeats),
        &[Metric::Mse],
        &cfg.fit_options(seed),
    )?;
    let at = |spec: ModelSpec, size: usize| -> Result<(f64, f64)> {
        rep.record(&spec, Some(size), Metric::Mse)
            .map(summary)
            .ok_or_else(|| Error::Config(format!("no record for {spec} at {size}")))
    };
    let (small, large) = (sizes[0], *sizes.last().expect("sizes"));
    let rf_small = at(specs[1], small)?;
    let rf_large = at(specs[1], large)?;
    let (rf_ok, z) = gap(rf_small, rf_large);
    let bdm: Vec<(f64, f64)> = sizes.iter().map(|&s| at(specs[0], s)).collect::<Result<_>>()?;
    let lo = bdm.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = bdm.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let min_se = bdm.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let bdm_ok = hi - lo < min_se;
    Ok((
        rf_ok && bdm_ok,
        format!(
            "{} repeats; rf(WO) {:.4} at {small} -> {:.4} at {large} (gap {z:.1} SE); \
             BDM range {:.5} vs smallest SE {:.5}",
            cfg.sweep_repeats,
            rf_small.0,
            rf_large.0,
            hi - lo,
            min_se
        ),
    ))
}

fn pricing(cfg: &AcceptanceConfig) -> Outcome {
    let seed = derive_seed(cfg.seed, &[7]);
    let (c, _) = simulate_cohort(&SimConfig::with_seed(seed))?;
    let opts = cfg.fit_options(seed);
    let mut self_share = f64::INFINITY;
    for spec in [ModelSpec::bdm(), ModelSpec::rf(FeatureSpace::WO)] {
        let x = assemble_space(&c, spec.matrix_space(), false);
        let m = fit_model(spec, &x.all(), false, &opts)?;
        let rep = revenue_comparison(&m, &m, &c)?;
        self_share = self_share.min(rep.summary.share_nonnegative_gain);
    }

    let (mut pos, mut total) = (0usize, 0usize);
    let mut gains = Vec::new();
    for k in 0..cfg.pricing_seeds {
        let seed = derive_seed(cfg.seed, &[7, k as u64 + 1]);
        let sim = SimConfig {
            wtp_bias: PRICING_BIAS_DOLLARS,
            wtp_noise_sd: PRICING_WTP_NOISE,
            buy_noise_sd: PRICING_BUY_NOISE,
            ..SimConfig::with_seed(seed)
        };
        let (c, _) = simulate_cohort(&sim)?;
        let opts = FitOptions {
            forest: cfg.pricing_forest.clone(),
            ..cfg.fit_options(seed)
        };
        let fit = |spec: ModelSpec| {
            let x = assemble_space(&c, spec.matrix_space(), false);
            fit_model(spec, &x.all(), false, &opts)
        };
        let pricing = fit(ModelSpec::rf(FeatureSpace::WO))?;
        let truth = fit(ModelSpec::rf(FeatureSpace::WOA))?;
        let rep = revenue_comparison(&pricing, &truth, &c)?;
        pos += rep.results.iter().filter(|r| r.rev_star > r.rev_wtp).count();
        total += rep.results.len();
        gains.push(rep.summary.gain_pct);
    }
    let share = pos as f64 / total.max(1) as f64;
    let ok = self_share == 1.0
        && cfg.pricing_seeds >= 10
        && gains.iter().all(|g| *g > 0.0)
        && share >= MIN_POSITIVE_GAIN_SHARE;
    Ok((
        ok,
        format!(
            "self-priced pairs with gain >= 0: {:.1}%; rf(WO) vs rf(WOA) over {} biased seeds: \
             gain {:.1}%..{:.1}%, pairs with positive gain {:.1}%",
            100.0 * self_share,
            cfg.pricing_seeds,
            gains.iter().copied().fold(f64::INFINITY, f64::min),
            gains.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            100.0 * share
        ),
    ))
}

fn scratch_dir(cfg: &AcceptanceConfig) -> Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("demandml-acceptance-{}-{}", std::process::id(), cfg.seed));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn determinism_and_leakage(cfg: &AcceptanceConfig) -> Outcome {
    let dir = scratch_dir(cfg)?;
    let result = determinism_in(cfg, &dir);
    let _ = fs::remove_dir_all(&dir);
    result
}

fn determinism_in(cfg: &AcceptanceConfig, dir: &std::path::Path) -> Outcome {
    let seed = cfg.seed.to_string();
    let data = dir.join("data");
    let config = dir.join("config.json");
    let forest = serde_json::to_value(ForestConfig {
        n_trees: 20,
        ..cfg.forest.clone()
    })?;
    let cfg_json = serde_json::json!({ "schema_version": 1, "forest": forest, "n_repeats": 3 });
    fs::write(&config, cfg_json.to_string()).map_err(|e| Error::io(&config, e))?;
    let s = |p: &std::path::Path| p.to_string_lossy().into_owned();
    if crate::cli::run(["demandml", "simulate", "--quiet", "--seed", &seed, "--out", &s(&data)]) != 0 {
        return Err(Error::Config("simulate failed".into()));
    }
    let mut reports = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.join(format!("eval-{threads}"));
        let code = crate::cli::run([
            "demandml",
            "evaluate",
            "--quiet",
            "--data",
            &s(&data),
            "--out",
            &s(&out),
            "--config",
            &s(&config),
            "--seed",
            &seed,
            "--threads",
            threads,
            "--models",
            "bdm,probbuy,logit,lasso,rf",
            "--spaces",
            "W",
        ]);
        if code != 0 {
            return Err(Error::Config(format!("evaluate --threads {threads} exited {code}")));
        }
        let p = out.join("report.csv");
        reports.push(fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    let identical = reports[0] == reports[1];

    // Between-item matrices carry no item-indexed column.
    let (c, _) = simulate_cohort(&SimConfig::with_seed(cfg.seed))?;
    let all_specs: Vec<ModelSpec> = FeatureSpace::ALL.iter().map(|&s| ModelSpec::rf(s)).collect();
    let mats = Matrices::build(&c, &all_specs, Protocol::BetweenItem.drops_item_effects())?;
    let mut item_cols = 0;
    for s in FeatureSpace::ALL {
        let x = mats.get(s);
        item_cols += x.item_indexed.iter().filter(|&&f| f).count();
        item_cols += x
            .column_names
            .iter()
            .filter(|n| n.starts_with("item_") || n.contains("_x_item_"))
            .count();
    }

    // Fits on the training rows of a matrix whose test rows were scrambled
    // must equal fits on the original matrix.
    let split = SplitSpec::new(Protocol::WithinBetween, cfg.seed).split(&c, 0)?;
    let opts = FitOptions {
        forest: ForestConfig {
            n_trees: 20,
            ..cfg.forest.clone()
        },
        ..cfg.fit_options(cfg.seed)
    };
    let mut leaks = Vec::new();
    for spec in [
        ModelSpec::logit(FeatureSpace::W),
        ModelSpec::lasso(FeatureSpace::W),
        ModelSpec::rf(FeatureSpace::W),
        ModelSpec::logit_surplus(),
    ] {
        let x = assemble_space(&c, spec.matrix_space(), false);
        let mut scrambled = x.clone();
        let p = scrambled.n_cols();
        for &r in &split.test {
            for v in &mut scrambled.data[r * p..(r + 1) * p] {
                *v = *v * 7.0 + 3.0;
            }
            scrambled.outcome[r] = !scrambled.outcome[r];
            scrambled.meta[r].wtp = Money::from_cents(575)?;
        }
        let a = fit_model(spec, &x.rows(&split.train), false, &opts)?;
        let b = fit_model(spec, &scrambled.rows(&split.train), false, &opts)?;
        if a != b {
            leaks.push(spec.to_string());
        }
    }
    let ok = identical && item_cols == 0 && leaks.is_empty();
    Ok((
        ok,
        format!(
            "report.csv byte-identical under --threads 1/8: {identical}; item-indexed columns in \
             between-item matrices: {item_cols}; fits changed by test-row edits: {}",
            if leaks.is_empty() { "none".to_string() } else { leaks.join(",") }
        ),
    ))
}
