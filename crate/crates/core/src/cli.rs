//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 on validation or runtime errors, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::sync::atomic::{AtomicBool, Ordering};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, AcceptanceConfig};
use crate::domain::{load_cohort, save_cohort, Cohort, COHORT_FILES};
use crate::error::{Error, Result};
use crate::evaluation::diagnostics::{demand_trend_diagnostics, surplus_binned_mse, write_surplus_bins};
use crate::evaluation::report::{
    buy_rows_meta, consolidate, default_sweep_sizes, evaluate, read_report_rows, sample_size_sweep, write_report_rows,
    EvalReport, Metric, ReportRow,
};
use crate::evaluation::splits::{Protocol, SplitSpec};
use crate::features::{assemble_space, FeatureSpace};
use crate::learners::{fit_bdm, ForestConfig, LassoConfig};
use crate::manifest::ManifestBuilder;
use crate::model::{expand_specs, fit_model, FitOptions, ModelSpec, TrainedModel};
use crate::pricing::revenue_comparison;
use crate::sim::{simulate_cohort, SimConfig};

static QUIET: AtomicBool = AtomicBool::new(false);

macro_rules! say {
    ($($t:tt)*) => {
        if !QUIET.load(Ordering::Relaxed) {
            println!($($t)*);
        }
    };
}

macro_rules! say_raw {
    ($($t:tt)*) => {
        if !QUIET.load(Ordering::Relaxed) {
            print!($($t)*);
        }
    };
}


pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Contents of a `--config` file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub sim: SimConfig,
    pub forest: ForestConfig,
    pub lasso: LassoConfig,
    pub n_repeats: usize,
    /// Overrides the protocol's default holdout size.
    pub holdout: Option<usize>,
    pub sweep_sizes: Option<Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            sim: SimConfig::default(),
            forest: ForestConfig::default(),
            lasso: LassoConfig::default(),
            n_repeats: 50,
            holdout: None,
            sweep_sizes: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "demandml", version, about = "Predict purchase decisions from BDM, 2AFC and Buy-task data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Suppress the stdout summary
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Selection {
    /// Models, e.g. bdm,probbuy,logit,rf or rf(WOA)
    #[arg(long, alias = "model", value_delimiter = ',', default_value = "bdm,probbuy,logit,rf")]
    pub models: Vec<String>,
    /// Feature spaces for space-taking models
    #[arg(long, alias = "features", value_delimiter = ',', default_value = "W")]
    pub spaces: Vec<FeatureSpace>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write feature matrices as CSV
    Featurize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "C,W,WO,A,AR,WA,WOA,WOAR")]
        spaces: Vec<FeatureSpace>,
        /// Leave out item indicators and their interactions
        #[arg(long)]
        drop_item_effects: bool,
    },
    /// Fit models on every Buy row and save them as JSON
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated holdout evaluation
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "within_between")]
        protocol: Protocol,
        /// Overrides the config's repeat count
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "mse,auc,deviance")]
        metrics: Vec<Metric>,
    },
    /// Evaluation over nested training subsets of increasing size
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "within_between")]
        protocol: Protocol,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "mse,auc,deviance")]
        metrics: Vec<Metric>,
        /// Training sizes (default 600 to 3960)
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Revenue-maximizing prices against pricing at stated WTP
    Price {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Model file or label setting the prices
        #[arg(long, default_value = "rf(WO)")]
        pricing_model: String,
        /// Model file or label providing the assumed true demand
        #[arg(long, default_value = "rf(WOA)")]
        truth_model: String,
    },
    /// Trend regressions and purchase frequency by surplus
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge report.csv files into one summary table
    Report {
        #[command(flatten)]
        common: Common,
        /// report.csv files or directories holding one
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance criteria
    Acceptance {
        #[command(flatten)]
        common: Common,
        /// Criterion numbers to run (default: all)
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Featurize { common, .. }
            | Command::Fit { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Price { common, .. }
            | Command::Diagnose { common, .. }
            | Command::Report { common, .. }
            | Command::Acceptance { common, .. } => common,
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(v) = &e {
                for m in v.iter().take(20) {
                    eprintln!("  {m}");
                }
            }
            1
        }
    }
}

fn execute(cmd: Command) -> Result<i32> {
    let threads = cmd.common().threads;
    match threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cmd)),
        None => dispatch(cmd),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_data(dir: &Path, m: &mut ManifestBuilder) -> Result<Cohort> {
    let c = load_cohort(dir)?;
    for f in COHORT_FILES {
        m.input(dir.join(f))?;
    }
    Ok(c)
}

fn fit_options(cfg: &RunConfig, seed: u64) -> FitOptions {
    FitOptions {
        seed,
        forest: cfg.forest.clone(),
        lasso: cfg.lasso.clone(),
    }
}

/// The effective settings of a run, digested into its manifest.
#[derive(Serialize)]
struct Effective<'a, T: Serialize> {
    config: &'a RunConfig,
    seed: u64,
    args: T,
}

fn file_label(spec: &ModelSpec) -> String {
    spec.to_string().replace('(', "_").replace(')', "")
}

fn dispatch(cmd: Command) -> Result<i32> {
    let common = cmd.common().clone();
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = common.seed;
    QUIET.store(common.quiet, Ordering::Relaxed);
    match cmd {
        Command::Simulate { out, .. } => {
            let sim = SimConfig { seed, ..cfg.sim.clone() };
            let mut m = ManifestBuilder::new("simulate", seed, &Effective { config: &cfg, seed, args: () })?;
            let (c, truth) = simulate_cohort(&sim)?;
            save_cohort(&c, &out)?;
            for f in COHORT_FILES {
                m.output(f);
            }
            let diag = out.join("diagnostics");
            create_dir(&diag)?;
            truth.save_csv(diag.join("latent_truth.csv"))?;
            m.output("diagnostics/latent_truth.csv");
            m.finish(&out)?;
            say!(
                "simulated {} subjects x {} items: {} wtp, {} afc, {} buy rows -> {}",
                c.n_subjects(),
                c.n_items(),
                c.wtp.len(),
                c.afc.len(),
                c.buy.len(),
                out.display()
            );
        }
        Command::Featurize {
            data,
            out,
            spaces,
            drop_item_effects,
            ..
        } => {
            let mut m = ManifestBuilder::new(
                "featurize",
                seed,
                &Effective {
                    config: &cfg,
                    seed,
                    args: (&spaces, drop_item_effects),
                },
            )?;
            let c = load_data(&data, &mut m)?;
            create_dir(&out)?;
            for s in spaces {
                let x = assemble_space(&c, s, drop_item_effects);
                let name = format!("features_{s}.csv");
                x.write_csv(out.join(&name))?;
                m.output(&name);
                say!("{s}: {} rows x {} columns", x.n_rows(), x.n_cols());
            }
            m.finish(&out)?;
        }
        Command::Fit { selection, data, out, .. } => {
            let specs = expand_specs(&selection.models, &selection.spaces)?;
            let mut m = ManifestBuilder::new(
                "fit",
                seed,
                &Effective {
                    config: &cfg,
                    seed,
                    args: &specs,
                },
            )?;
            let c = load_data(&data, &mut m)?;
            create_dir(&out)?;
            let opts = fit_options(&cfg, seed);
            for spec in &specs {
                let model = fit_full(&c, *spec, &opts)?;
                let name = format!("model_{}.json", file_label(spec));
                model.save(out.join(&name))?;
                m.output(&name);
                say!("fitted {spec} -> {}", out.join(&name).display());
            }
            m.finish(&out)?;
        }
        Command::Evaluate {
            selection,
            data,
            out,
            protocol,
            repeats,
            metrics,
            ..
        } => {
            let specs = expand_specs(&selection.models, &selection.spaces)?;
            let split = split_spec(&cfg, protocol, repeats, seed);
            let mut m = ManifestBuilder::new(
                "evaluate",
                seed,
                &Effective {
                    config: &cfg,
                    seed,
                    args: (&specs, &split, &metrics),
                },
            )?;
            let c = load_data(&data, &mut m)?;
            let report = evaluate(&c, &specs, &split, &metrics, &fit_options(&cfg, seed))?;
            write_eval_outputs(&c, &report, &out, &mut m, false)?;
            m.finish(&out)?;
            print_report(&report);
        }
        Command::Sweep {
            selection,
            data,
            out,
            protocol,
            repeats,
            metrics,
            sizes,
            ..
        } => {
            let specs = expand_specs(&selection.models, &selection.spaces)?;
            let split = split_spec(&cfg, protocol, repeats, seed);
            let sizes = sizes
                .or_else(|| cfg.sweep_sizes.clone())
                .unwrap_or_else(default_sweep_sizes);
            let mut m = ManifestBuilder::new(
                "sweep",
                seed,
                &Effective {
                    config: &cfg,
                    seed,
                    args: (&specs, &split, &metrics, &sizes),
                },
            )?;
            let c = load_data(&data, &mut m)?;
            let report = sample_size_sweep(&c, &specs, &sizes, &split, &metrics, &fit_options(&cfg, seed))?;
            write_eval_outputs(&c, &report, &out, &mut m, true)?;
            m.finish(&out)?;
            print_report(&report);
        }
        Command::Price {
            data,
            out,
            pricing_model,
            truth_model,
            ..
        } => {
            let mut m = ManifestBuilder::new(
                "price",
                seed,
                &Effective {
                    config: &cfg,
                    seed,
                    args: (&pricing_model, &truth_model),
                },
            )?;
            let c = load_data(&data, &mut m)?;
            let opts = fit_options(&cfg, seed);
            let pricing = resolve_model(&c, &pricing_model, &opts, &mut m)?;
            let truth = resolve_model(&c, &truth_model, &opts, &mut m)?;
            let rep = revenue_comparison(&pricing, &truth, &c)?;
            create_dir(&out)?;
            rep.write_csv(out.join("pricing.csv"))?;
            m.output("pricing.csv");
            let summary = serde_json::json!({
                "pricing_model": rep.pricing_model,
                "truth_model": rep.truth_model,
                "summary": rep.summary,
            });
            let path = out.join("summary.json");
            fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
            m.output("summary.json");
            m.finish(&out)?;
            let s = &rep.summary;
            say!("pricing model      {}", rep.pricing_model);
            say!("truth model        {}", rep.truth_model);
            say!("pairs              {}", s.n_pairs);
            say!("mean revenue @WTP  ${:.3}", s.mean_rev_wtp);
            say!("mean revenue @p*   ${:.3}", s.mean_rev_star);
            say!("gain               {:.1}%", s.gain_pct);
            say!("pairs with gain    {:.1}%", 100.0 * s.share_positive_gain);
            say!("corr(p*, WTP)      {:.4}", s.corr_p_star_wtp);
            say!("mean p* - WTP      ${:.4}", s.mean_diff_dollars);
            say!("mean |p* - WTP|    ${:.4}", s.mean_abs_diff_dollars);
        }
        Command::Diagnose { data, out, .. } => {
            let mut m = ManifestBuilder::new("diagnose", seed, &Effective { config: &cfg, seed, args: () })?;
            let c = load_data(&data, &mut m)?;
            create_dir(&out)?;
            let trend = demand_trend_diagnostics(&c)?;
            let rows = buy_rows_meta(&c);
            let bins = surplus_binned_mse(&rows, &[])?;
            let x = assemble_space(&c, FeatureSpace::C, false);
            let bdm = fit_bdm(&x.all());
            let zero = bins.iter().find(|b| b.surplus_cents == 0);
            let diag = serde_json::json!({
                "trend": trend,
                "indifference_purchase_rate": bdm.q,
                "indifference_rows": zero.map(|b| b.n).unwrap_or(0),
                "overall_purchase_rate": c.buy.iter().filter(|b| b.bought).count() as f64 / c.buy.len() as f64,
            });
            let path = out.join("diagnostics.json");
            fs::write(&path, serde_json::to_string_pretty(&diag)?).map_err(|e| Error::io(&path, e))?;
            m.output("diagnostics.json");
            create_dir(&out.join("plotdata"))?;
            write_surplus_bins(&bins, &[], out.join("plotdata/purchase_by_surplus.csv"))?;
            m.output("plotdata/purchase_by_surplus.csv");
            m.finish(&out)?;
            say!(
                "WTP trend  {:+.5} $/trial (se {:.5}, p = {:.3})",
                trend.wtp.coef, trend.wtp.std_error, trend.wtp.p_value
            );
            say!(
                "Buy trend  {:+.5} logit/trial (se {:.5}, p = {:.3})",
                trend.buy.coef, trend.buy.std_error, trend.buy.p_value
            );
            say!("purchase rate at price = WTP: {:.3}", bdm.q);
        }
        Command::Report { inputs, out, .. } => {
            let mut m = ManifestBuilder::new("report", seed, &Effective { config: &cfg, seed, args: &inputs })?;
            let mut tables: Vec<Vec<ReportRow>> = Vec::new();
            for p in &inputs {
                let file = if p.is_dir() { p.join("report.csv") } else { p.clone() };
                tables.push(read_report_rows(&file)?);
                m.input(&file)?;
            }
            let table = consolidate(&tables)?;
            create_dir(&out)?;
            table.write_csv(out.join("summary_table.csv"))?;
            m.output("summary_table.csv");
            m.finish(&out)?;
            say_raw!("{table}");
        }
        Command::Acceptance { only, .. } => {
            let acfg = AcceptanceConfig::standard(seed);
            let results = acceptance::run_selected(&acfg, only.as_deref(), |r| println!("{r}"));
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} of {} criteria passed", results.len() - failed, results.len());
            return Ok(if failed == 0 { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn split_spec(cfg: &RunConfig, protocol: Protocol, repeats: Option<usize>, seed: u64) -> SplitSpec {
    let mut s = SplitSpec::new(protocol, seed).with_repeats(repeats.unwrap_or(cfg.n_repeats));
    if let Some(h) = cfg.holdout {
        s.holdout_size = h;
    }
    s
}

/// Fits `spec` on every Buy row of the cohort.
pub fn fit_full(c: &Cohort, spec: ModelSpec, opts: &FitOptions) -> Result<TrainedModel> {
    let x = assemble_space(c, spec.matrix_space(), false);
    fit_model(spec, &x.all(), false, opts)
}

fn resolve_model(c: &Cohort, arg: &str, opts: &FitOptions, m: &mut ManifestBuilder) -> Result<TrainedModel> {
    let p = Path::new(arg);
    if p.is_file() {
        m.input(p)?;
        let model = TrainedModel::load(p)?;
        if model.item_fe_dropped {
            return Err(Error::ModelSpaceMismatch(
                "pricing needs a model fitted with item effects".into(),
            ));
        }
        return Ok(model);
    }
    fit_full(c, arg.parse()?, opts)
}

fn write_eval_outputs(c: &Cohort, report: &EvalReport, out: &Path, m: &mut ManifestBuilder, sweep: bool) -> Result<()> {
    create_dir(out)?;
    report.write_csv(out.join("report.csv"))?;
    m.output("report.csv");
    report.write_repeats_csv(out.join("repeats.csv"))?;
    m.output("repeats.csv");
    create_dir(&out.join("plotdata"))?;
    let labels: Vec<String> = report.models.iter().map(ModelSpec::to_string).collect();
    if sweep {
        let rows: Vec<ReportRow> = report.rows();
        write_report_rows(&rows, out.join("plotdata/sweep_curves.csv"))?;
        m.output("plotdata/sweep_curves.csv");
    }
    let meta = buy_rows_meta(c);
    let pooled = report.pooled_predictions(None);
    let rows: Vec<_> = pooled.iter().map(|(r, _)| meta[*r]).collect();
    let preds: Vec<Vec<Option<f64>>> = (0..labels.len())
        .map(|k| pooled.iter().map(|(_, p)| p[k]).collect())
        .collect();
    let bins = surplus_binned_mse(&rows, &preds)?;
    write_surplus_bins(&bins, &labels, out.join("plotdata/surplus_bins.csv"))?;
    m.output("plotdata/surplus_bins.csv");
    Ok(())
}

fn print_report(report: &EvalReport) {
    say!(
        "{:<16} {:>6} {:<9} {:>10} {:>10} {:>4}",
        "model", "size", "metric", "mean", "stderr", "n"
    );
    for r in &report.records {
        say!(
            "{:<16} {:>6} {:<9} {:>10.4} {:>10.4} {:>4}",
            r.model.to_string(),
            r.size,
            r.metric.to_string(),
            r.mean(),
            r.stderr(),
            r.n_ok()
        );
    }
    if !report.failures.is_empty() {
        eprintln!("{} fits failed; first: {} repeat {}: {}", report.failures.len(), report.failures[0].model, report.failures[0].repeat, report.failures[0].message);
    }
}
