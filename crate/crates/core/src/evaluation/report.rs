//! Repeat-averaged evaluation reports and sample-size sweeps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, binomial_deviance, mse};
use super::splits::{Protocol, Split, SplitSpec};
use crate::domain::Cohort;
use crate::error::{Error, Result};
use crate::features::{FeatureBuilder, FeatureMatrix, FeatureSpace, RowMeta};
use crate::model::{fit_model, FitOptions, ModelSpec};
use crate::rng::{derive_seed, substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Auc,
    Deviance,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::Auc, Metric::Deviance];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Auc => "auc",
            Metric::Deviance => "deviance",
        }
    }

    /// Deviance is reported per test row so that protocols with different
    /// test sizes stay comparable.
    pub fn score(self, pred: &[f64], y: &[bool]) -> Result<f64> {
        match self {
            Metric::Mse => mse(pred, y),
            Metric::Auc => auc(pred, y),
            Metric::Deviance => Ok(binomial_deviance(pred, y)? / y.len() as f64),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown metric '{s}'")))
    }
}

/// 600, 800, ..., 3800 and then 3960.
pub fn default_sweep_sizes() -> Vec<usize> {
    let mut v: Vec<usize> = (600..=3800).step_by(200).collect();
    v.push(3960);
    v
}

/// One metric of one model at one training size, across repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub model: ModelSpec,
    pub protocol: Protocol,
    pub size: usize,
    pub metric: Metric,
    /// One entry per repeat; NaN where the fit or the metric failed.
    pub values: Vec<f64>,
}

impl MetricRecord {
    pub fn n_ok(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    pub fn mean(&self) -> f64 {
        let ok: Vec<f64> = self.values.iter().copied().filter(|v| v.is_finite()).collect();
        ok.iter().sum::<f64>() / ok.len() as f64
    }

    /// Sample standard deviation over repeats divided by sqrt(repeats).
    pub fn stderr(&self) -> f64 {
        let ok: Vec<f64> = self.values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = ok.len();
        if n < 2 {
            return f64::NAN;
        }
        let m = ok.iter().sum::<f64>() / n as f64;
        let var = ok.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatFailure {
    pub model: ModelSpec,
    pub size: usize,
    pub repeat: usize,
    pub message: String,
}

/// Test-row predictions of one repeat at one training size.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPredictions {
    pub repeat: usize,
    pub size: usize,
    /// Positions in `Cohort::buy`.
    pub test: Vec<usize>,
    /// Aligned with the report's model list; `None` where the fit failed.
    pub by_model: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub models: Vec<ModelSpec>,
    pub split: SplitSpec,
    pub records: Vec<MetricRecord>,
    pub failures: Vec<RepeatFailure>,
    pub predictions: Vec<TestPredictions>,
}

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub space: String,
    pub protocol: String,
    pub size: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_repeats: usize,
}

impl EvalReport {
    pub fn record(&self, model: &ModelSpec, size: Option<usize>, metric: Metric) -> Option<&MetricRecord> {
        self.records
            .iter()
            .filter(|r| r.model == *model && r.metric == metric && size.is_none_or(|s| r.size == s))
            .max_by_key(|r| r.size)
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.records
            .iter()
            .map(|r| ReportRow {
                model: r.model.kind.as_str().to_string(),
                space: r.model.space.map(|s| s.to_string()).unwrap_or_default(),
                protocol: r.protocol.to_string(),
                size: r.size,
                metric: r.metric.to_string(),
                mean: r.mean(),
                stderr: r.stderr(),
                n_repeats: r.n_ok(),
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_report_rows(&self.rows(), path)
    }

    /// Long-format per-repeat values: model,space,protocol,size,metric,repeat,value.
    pub fn write_repeats_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["model", "space", "protocol", "size", "metric", "repeat", "value"])?;
        for r in &self.records {
            for (k, v) in r.values.iter().enumerate() {
                w.write_record([
                    r.model.kind.as_str().to_string(),
                    r.model.space.map(|s| s.to_string()).unwrap_or_default(),
                    r.protocol.to_string(),
                    r.size.to_string(),
                    r.metric.to_string(),
                    k.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Test rows and predictions of every repeat at `size` (the largest size
    /// when `None`), pooled; rows whose model failed are skipped for that model.
    pub fn pooled_predictions(&self, size: Option<usize>) -> Vec<(usize, Vec<Option<f64>>)> {
        let size = size.or_else(|| self.predictions.iter().map(|p| p.size).max());
        let mut out = Vec::new();
        for p in self.predictions.iter().filter(|p| Some(p.size) == size) {
            for (k, &row) in p.test.iter().enumerate() {
                out.push((row, p.by_model.iter().map(|m| m.as_ref().map(|v| v[k])).collect()));
            }
        }
        out
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_report_rows(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_rows(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut rows = Vec::new();
    for (k, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e| Error::MalformedRow {
            file: path.display().to_string(),
            line: k as u64 + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Feature matrices of every space a model list needs, built once per cohort.
pub struct Matrices {
    by_space: HashMap<FeatureSpace, FeatureMatrix>,
}

impl Matrices {
    pub fn build(c: &Cohort, specs: &[ModelSpec], drop_item_effects: bool) -> Result<Matrices> {
        let builder = FeatureBuilder::new(c);
        let spaces: BTreeSet<FeatureSpace> = specs.iter().map(ModelSpec::matrix_space).collect();
        let mut by_space = HashMap::new();
        for s in spaces {
            let x = builder.groups_for_cohort(c, s.groups(), drop_item_effects);
            if drop_item_effects {
                if let Some(j) = x.item_indexed.iter().position(|&f| f) {
                    return Err(Error::Config(format!(
                        "item-indexed column {} present with item effects dropped",
                        x.column_names[j]
                    )));
                }
            }
            by_space.insert(s, x);
        }
        Ok(Matrices { by_space })
    }

    pub fn get(&self, s: FeatureSpace) -> &FeatureMatrix {
        &self.by_space[&s]
    }
}

/// Fits every model on every repeat's training rows and scores the test rows.
pub fn evaluate(
    c: &Cohort,
    specs: &[ModelSpec],
    split: &SplitSpec,
    metrics: &[Metric],
    opts: &FitOptions,
) -> Result<EvalReport> {
    run(c, specs, split, None, metrics, opts)
}

/// Like [`evaluate`], with nested random training subsets of each size drawn
/// from every repeat's training rows; test rows stay fixed within a repeat.
pub fn sample_size_sweep(
    c: &Cohort,
    specs: &[ModelSpec],
    sizes: &[usize],
    split: &SplitSpec,
    metrics: &[Metric],
    opts: &FitOptions,
) -> Result<EvalReport> {
    if sizes.is_empty() {
        return Err(Error::Config("empty size list".into()));
    }
    run(c, specs, split, Some(sizes), metrics, opts)
}

struct RepeatOutcome {
    /// (size, spec index, metric index) → value.
    values: Vec<(usize, usize, usize, f64)>,
    failures: Vec<RepeatFailure>,
    predictions: Vec<TestPredictions>,
}

fn run(
    c: &Cohort,
    specs: &[ModelSpec],
    split: &SplitSpec,
    sizes: Option<&[usize]>,
    metrics: &[Metric],
    opts: &FitOptions,
) -> Result<EvalReport> {
    if specs.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    if metrics.is_empty() {
        return Err(Error::Config("no metrics requested".into()));
    }
    if split.n_repeats == 0 {
        return Err(Error::Split("n_repeats must be >= 1".into()));
    }
    let drop = split.protocol.drops_item_effects();
    let mats = Matrices::build(c, specs, drop)?;
    let splits: Vec<Split> = (0..split.n_repeats).map(|r| split.split(c, r)).collect::<Result<_>>()?;
    if let Some(sizes) = sizes {
        let pool = splits.iter().map(|s| s.train.len()).min().unwrap_or(0);
        if let Some(&s) = sizes.iter().find(|&&s| s > pool || s == 0) {
            return Err(Error::Split(format!("training size {s} outside 1..={pool}")));
        }
    }
    let full_size = splits[0].train.len();
    let size_list: Vec<usize> = sizes.map(<[usize]>::to_vec).unwrap_or_else(|| vec![full_size]);

    let outcomes: Vec<RepeatOutcome> = splits
        .par_iter()
        .enumerate()
        .map(|(r, sp)| {
            let fit_opts = FitOptions {
                seed: derive_seed(opts.seed, &[tag::FIT, r as u64]),
                ..opts.clone()
            };
            let mut perm = sp.train.clone();
            if sizes.is_some() {
                perm.shuffle(&mut substream(split.seed, &[tag::SWEEP, r as u64]));
            }
            let mut out = RepeatOutcome {
                values: Vec::new(),
                failures: Vec::new(),
                predictions: Vec::new(),
            };
            for (si, &size) in size_list.iter().enumerate() {
                let train: Vec<usize> = if sizes.is_some() {
                    let mut t = perm[..size].to_vec();
                    t.sort_unstable();
                    t
                } else {
                    sp.train.clone()
                };
                let mut by_model = Vec::with_capacity(specs.len());
                for (k, spec) in specs.iter().enumerate() {
                    let x = mats.get(spec.matrix_space());
                    let test_rows = x.rows(&sp.test);
                    let y = test_rows.outcomes();
                    let pred = fit_model(*spec, &x.rows(&train), drop, &fit_opts)
                        .and_then(|m| m.predict(&test_rows));
                    match pred {
                        Ok(p) => {
                            for (mi, m) in metrics.iter().enumerate() {
                                let v = m.score(&p, &y).unwrap_or(f64::NAN);
                                out.values.push((si, k, mi, v));
                            }
                            by_model.push(Some(p));
                        }
                        Err(e) => {
                            out.failures.push(RepeatFailure {
                                model: *spec,
                                size,
                                repeat: r,
                                message: e.to_string(),
                            });
                            for mi in 0..metrics.len() {
                                out.values.push((si, k, mi, f64::NAN));
                            }
                            by_model.push(None);
                        }
                    }
                }
                out.predictions.push(TestPredictions {
                    repeat: r,
                    size,
                    test: sp.test.clone(),
                    by_model,
                });
            }
            out
        })
        .collect();

    let n_rep = split.n_repeats;
    let mut records = Vec::new();
    for &size in &size_list {
        for spec in specs {
            for &metric in metrics {
                records.push(MetricRecord {
                    model: *spec,
                    protocol: split.protocol,
                    size,
                    metric,
                    values: vec![f64::NAN; n_rep],
                });
            }
        }
    }
    let (nk, nm) = (specs.len(), metrics.len());
    let mut failures = Vec::new();
    let mut predictions = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        for (si, k, mi, v) in o.values {
            records[(si * nk + k) * nm + mi].values[r] = v;
        }
        failures.extend(o.failures);
        predictions.extend(o.predictions);
    }
    Ok(EvalReport {
        models: specs.to_vec(),
        split: *split,
        records,
        failures,
        predictions,
    })
}

/// Merged `report.csv` inputs, one row per (model, space, metric) and one
/// column per protocol holding `mean (stderr)` at the largest training size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedTable {
    pub protocols: Vec<String>,
    /// (model label, metric, cells aligned with `protocols`).
    pub rows: Vec<(String, String, Vec<String>)>,
}

pub fn format_cell(mean: f64, stderr: f64) -> String {
    format!("{mean:.4} ({stderr:.4})")
}

pub fn consolidate(inputs: &[Vec<ReportRow>]) -> Result<ConsolidatedTable> {
    type Key = (String, String, String, usize, String);
    let mut all: BTreeMap<Key, &ReportRow> = BTreeMap::new();
    for row in inputs.iter().flatten() {
        let key = (
            row.model.clone(),
            row.space.clone(),
            row.protocol.clone(),
            row.size,
            row.metric.clone(),
        );
        if let Some(prev) = all.get(&key) {
            let same = prev.mean.to_bits() == row.mean.to_bits()
                && prev.stderr.to_bits() == row.stderr.to_bits()
                && prev.n_repeats == row.n_repeats;
            if !same {
                return Err(Error::DuplicateKey(format!(
                    "{} {} {} size {} {}",
                    key.0, key.1, key.2, key.3, key.4
                )));
            }
        }
        all.insert(key, row);
    }
    let mut protocols: Vec<String> = Vec::new();
    for p in Protocol::ALL.iter().map(|p| p.as_str().to_string()) {
        if all.keys().any(|k| k.2 == p) {
            protocols.push(p);
        }
    }
    for k in all.keys() {
        if !protocols.contains(&k.2) {
            protocols.push(k.2.clone());
        }
    }
    // Largest size per (model, space, protocol, metric).
    let mut cells: BTreeMap<(String, String, String), BTreeMap<String, &ReportRow>> = BTreeMap::new();
    for ((model, space, protocol, _, metric), row) in &all {
        let label = if space.is_empty() {
            model.clone()
        } else {
            format!("{model}({space})")
        };
        let slot = cells
            .entry((label, metric.clone(), model.clone()))
            .or_default()
            .entry(protocol.clone())
            .or_insert(row);
        if row.size > slot.size {
            *slot = row;
        }
    }
    let mut keys: Vec<_> = cells.keys().cloned().collect();
    keys.sort_by(|a, b| model_rank(&a.2).cmp(&model_rank(&b.2)).then(a.cmp(b)));
    let rows = keys
        .into_iter()
        .map(|k| {
            let by_p = &cells[&k];
            let vals = protocols
                .iter()
                .map(|p| by_p.get(p).map(|r| format_cell(r.mean, r.stderr)).unwrap_or_default())
                .collect();
            (k.0, k.1, vals)
        })
        .collect();
    Ok(ConsolidatedTable { protocols, rows })
}

fn model_rank(kind: &str) -> usize {
    ["probbuy", "bdm", "logit_surplus", "logit", "lasso", "rf"]
        .iter()
        .position(|k| *k == kind)
        .unwrap_or(usize::MAX)
}

impl ConsolidatedTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header = vec!["model".to_string(), "metric".to_string()];
        header.extend(self.protocols.iter().cloned());
        w.write_record(&header)?;
        for (m, metric, cells) in &self.rows {
            let mut rec = vec![m.clone(), metric.clone()];
            rec.extend(cells.iter().cloned());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for ConsolidatedTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<16} {:<9}", "model", "metric")?;
        for p in &self.protocols {
            write!(f, " {p:>18}")?;
        }
        writeln!(f)?;
        for (m, metric, cells) in &self.rows {
            write!(f, "{m:<16} {metric:<9}")?;
            for c in cells {
                write!(f, " {c:>18}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Row meta and outcome of Buy rows, for callers holding only positions.
pub fn buy_rows_meta(c: &Cohort) -> Vec<(RowMeta, bool)> {
    let table = c.wtp_table();
    c.buy
        .iter()
        .map(|b| {
            (
                RowMeta {
                    subject: b.subject,
                    item: b.item,
                    price: b.price,
                    wtp: c.wtp_for(&table, b.subject, b.item),
                    trial_index: b.trial_index,
                },
                b.bought,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(values: Vec<f64>) -> MetricRecord {
        MetricRecord {
            model: ModelSpec::bdm(),
            protocol: Protocol::WithinBetween,
            size: 10,
            metric: Metric::Mse,
            values,
        }
    }

    #[test]
    fn sweep_sizes() {
        let s = default_sweep_sizes();
        assert_eq!(s.len(), 18);
        assert_eq!((s[0], s[17]), (600, 3960));
    }

    #[test]
    fn stderr_is_sd_over_root_n() {
        let r = rec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.mean(), 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((r.stderr() - sd / 2.0).abs() < 1e-15);
        let r = rec(vec![1.0, f64::NAN, 3.0]);
        assert_eq!((r.n_ok(), r.mean()), (2, 2.0));
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.08904, 0.00091), "0.0890 (0.0009)");
    }
}
