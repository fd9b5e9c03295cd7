//! Random forest of regression trees on the binary purchase outcome.
//!
//! Trees grow on full-size bootstrap samples. At every node a fresh uniform
//! subset of `mtry` columns is searched for the threshold that minimizes the
//! summed Gini impurity of the two children. Candidate thresholds are the
//! midpoints between consecutive distinct values present in the node; ties go
//! to the lowest column index, then the lowest threshold. A node becomes a
//! leaf when it is pure, when it holds fewer than `2 * min_leaf` bootstrap
//! draws, or when no sampled column admits a split leaving `min_leaf` draws on
//! each side. Hyperparameters are tuned on out-of-bag mean squared error.
//!
//! Split search works on per-column bin indices (the rank of each value among
//! the column's distinct training values), so a node is scanned with a
//! histogram instead of a sort when that is cheaper. Both paths see the same
//! candidate thresholds.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Rows;
use crate::rng::{substream, tag, StreamRng};

pub const LEAF: u32 = u32::MAX;
pub const MIN_FOREST_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate `mtry` values; `None` uses round(sqrt p), round(p/3), round(p/10).
    pub mtry_grid: Option<Vec<usize>>,
    /// Candidate `mtry` values as fractions of p, used when `mtry_grid` is unset.
    pub mtry_fractions: Option<Vec<f64>>,
    pub min_leaf_grid: Vec<usize>,
    /// Test hook: when false every tree sees each row exactly once.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry_grid: None,
            mtry_fractions: None,
            min_leaf_grid: vec![1, 5, 10],
            bootstrap: true,
        }
    }
}

/// round(sqrt p), round(p/3), round(p/10), at least 1, deduplicated.
pub fn default_mtry_grid(p: usize) -> Vec<usize> {
    let p_f = p as f64;
    mtry_values(p, [p_f.sqrt(), p_f / 3.0, p_f / 10.0])
}

/// round(f * p) for each fraction, at least 1, deduplicated.
pub fn fractional_mtry_grid(p: usize, fractions: &[f64]) -> Vec<usize> {
    mtry_values(p, fractions.iter().map(|f| f * p as f64))
}

fn mtry_values(p: usize, raw: impl IntoIterator<Item = f64>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for m in raw {
        let m = (m.round() as usize).clamp(1, p.max(1));
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// A fitted tree stored as parallel arrays; `feature[k] == LEAF` marks leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    fn leaf(value: f64) -> Tree {
        Tree {
            feature: vec![LEAF],
            threshold: vec![0.0],
            left: vec![0],
            right: vec![0],
            value: vec![value],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    /// Leaf mean for a row; `cols[f]` maps tree feature `f` into `row`.
    #[inline]
    pub fn predict_row(&self, row: &[f64], cols: &[usize]) -> f64 {
        let mut k = 0usize;
        loop {
            let f = self.feature[k];
            if f == LEAF {
                return self.value[k];
            }
            k = if row[cols[f as usize]] <= self.threshold[k] {
                self.left[k]
            } else {
                self.right[k]
            } as usize;
        }
    }

    /// Like [`Tree::predict_row`] with feature `col` replaced by `value`.
    #[inline]
    fn predict_row_with(&self, row: &[f64], cols: &[usize], col: u32, value: f64) -> f64 {
        let mut k = 0usize;
        loop {
            let f = self.feature[k];
            if f == LEAF {
                return self.value[k];
            }
            let x = if f == col { value } else { row[cols[f as usize]] };
            k = if x <= self.threshold[k] { self.left[k] } else { self.right[k] } as usize;
        }
    }

    pub fn used_features(&self) -> Vec<u32> {
        let mut f: Vec<u32> = self.feature.iter().copied().filter(|&f| f != LEAF).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mtry: usize,
    pub min_leaf: usize,
    pub oob_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedForest {
    pub column_names: Vec<String>,
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub mtry: usize,
    pub min_leaf: usize,
    /// Out-of-bag MSE of the selected forest; `None` without out-of-bag rows.
    pub oob_error: Option<f64>,
    pub tuning: Vec<GridPoint>,
    /// Total Gini decrease per column, averaged over trees.
    pub gini_importance: Vec<f64>,
    /// Bootstrap draws per tree, as positions in the fitting rows.
    #[serde(skip)]
    pub bootstrap: Vec<Vec<u32>>,
    #[serde(skip)]
    pub n_fit_rows: usize,
}

impl FittedForest {
    fn column_map(&self, rows: &Rows<'_>) -> Result<Vec<usize>> {
        let lookup: HashMap<&str, usize> = rows
            .x
            .column_names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.as_str(), j))
            .collect();
        self.column_names
            .iter()
            .map(|n| {
                lookup
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::ModelSpaceMismatch(format!("column {n} not in feature matrix")))
            })
            .collect()
    }

    /// Mean of the per-tree leaf means.
    pub fn predict(&self, rows: &Rows<'_>) -> Result<Vec<f64>> {
        let cols = self.column_map(rows)?;
        let nt = self.trees.len() as f64;
        Ok((0..rows.len())
            .map(|k| {
                let row = rows.row(k);
                self.trees.iter().map(|t| t.predict_row(row, &cols)).sum::<f64>() / nt
            })
            .collect())
    }
}

/// Training rows converted to per-column bin indices.
struct Binned {
    n: usize,
    p: usize,
    /// Column-major bin index of every row.
    bins: Vec<u32>,
    /// Sorted distinct values per column.
    values: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Binned {
    fn new(rows: &Rows<'_>) -> Result<Binned> {
        let n = rows.len();
        let p = rows.x.n_cols();
        let mut bins = vec![0u32; n * p];
        let mut values = Vec::with_capacity(p);
        let mut col = Vec::with_capacity(n);
        for j in 0..p {
            col.clear();
            for k in 0..n {
                let v = rows.row(k)[j];
                if !v.is_finite() {
                    return Err(Error::NonFinite(rows.x.column_names[j].clone()));
                }
                col.push(v);
            }
            let mut distinct = col.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let out = &mut bins[j * n..(j + 1) * n];
            if distinct.len() > 1 {
                for (o, v) in out.iter_mut().zip(&col) {
                    *o = distinct.partition_point(|d| d < v) as u32;
                }
            }
            values.push(distinct);
        }
        Ok(Binned {
            n,
            p,
            bins,
            values,
            y: rows.outcomes_f64(),
        })
    }
}

#[inline]
fn gini(w: f64, s: f64) -> f64 {
    if w > 0.0 {
        2.0 * s * (w - s) / w
    } else {
        0.0
    }
}

struct GrownTree {
    tree: Tree,
    /// Gini decrease per column used.
    gini: Vec<(u32, f64)>,
}

struct Split {
    impurity: f64,
    col: usize,
    left_bin: u32,
    right_bin: u32,
}

impl Split {
    fn better_than(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.impurity < o.impurity
                    || (self.impurity == o.impurity
                        && (self.col < o.col || (self.col == o.col && self.left_bin < o.left_bin)))
            }
        }
    }
}

struct Grower<'a> {
    data: &'a Binned,
    mtry: usize,
    min_leaf: f64,
    count: Vec<f64>,
    sum: Vec<f64>,
    scratch: Vec<(u32, f64, f64)>,
    col_perm: Vec<usize>,
}

impl<'a> Grower<'a> {
    fn new(data: &'a Binned, mtry: usize, min_leaf: usize) -> Self {
        let max_bins = data.values.iter().map(Vec::len).max().unwrap_or(0);
        Grower {
            data,
            mtry: mtry.clamp(1, data.p.max(1)),
            min_leaf: min_leaf.max(1) as f64,
            count: vec![0.0; max_bins],
            sum: vec![0.0; max_bins],
            scratch: Vec::new(),
            col_perm: (0..data.p).collect(),
        }
    }

    fn best_split_in_column(&mut self, j: usize, rows: &[u32], weight: &[f64], w_tot: f64, s_tot: f64, best: &mut Option<Split>) {
        let nb = self.data.values[j].len();
        if nb < 2 {
            return;
        }
        let n = self.data.n;
        let col_bins = &self.data.bins[j * n..(j + 1) * n];
        let y = &self.data.y;
        let min_leaf = self.min_leaf;
        let consider = |left_bin: u32, right_bin: u32, wl: f64, sl: f64, best: &mut Option<Split>| {
            let wr = w_tot - wl;
            if wl < min_leaf || wr < min_leaf {
                return;
            }
            let cand = Split {
                impurity: gini(wl, sl) + gini(wr, s_tot - sl),
                col: j,
                left_bin,
                right_bin,
            };
            if cand.better_than(best) {
                *best = Some(cand);
            }
        };
        if nb <= 2 * rows.len() + 16 {
            let (count, sum) = (&mut self.count[..nb], &mut self.sum[..nb]);
            count.iter_mut().for_each(|c| *c = 0.0);
            sum.iter_mut().for_each(|s| *s = 0.0);
            for &r in rows {
                let b = col_bins[r as usize] as usize;
                let w = weight[r as usize];
                count[b] += w;
                sum[b] += w * y[r as usize];
            }
            let (mut wl, mut sl) = (0.0, 0.0);
            let mut prev: Option<u32> = None;
            for b in 0..nb {
                if count[b] == 0.0 {
                    continue;
                }
                if let Some(pb) = prev {
                    consider(pb, b as u32, wl, sl, best);
                }
                wl += count[b];
                sl += sum[b];
                prev = Some(b as u32);
            }
        } else {
            self.scratch.clear();
            for &r in rows {
                let w = weight[r as usize];
                self.scratch.push((col_bins[r as usize], w, w * y[r as usize]));
            }
            self.scratch.sort_unstable_by_key(|e| e.0);
            let (mut wl, mut sl) = (0.0, 0.0);
            let mut k = 0;
            let mut prev: Option<u32> = None;
            while k < self.scratch.len() {
                let b = self.scratch[k].0;
                let (mut wb, mut sb) = (0.0, 0.0);
                while k < self.scratch.len() && self.scratch[k].0 == b {
                    wb += self.scratch[k].1;
                    sb += self.scratch[k].2;
                    k += 1;
                }
                if let Some(pb) = prev {
                    consider(pb, b, wl, sl, best);
                }
                wl += wb;
                sl += sb;
                prev = Some(b);
            }
        }
    }

    fn grow(&mut self, rng: &mut StreamRng, weight: &[f64]) -> GrownTree {
        let data = self.data;
        // The permutation buffer is reused across trees; reset it so a tree
        // depends only on its own stream.
        self.col_perm.iter_mut().enumerate().for_each(|(k, c)| *c = k);
        let mut rows: Vec<u32> = (0..data.n as u32).filter(|&r| weight[r as usize] > 0.0).collect();
        let mut tree = Tree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
        };
        let mut gini_dec: Vec<(u32, f64)> = Vec::new();
        // (node id, start, end)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        let push_node = |tree: &mut Tree| {
            tree.feature.push(LEAF);
            tree.threshold.push(0.0);
            tree.left.push(0);
            tree.right.push(0);
            tree.value.push(0.0);
            tree.feature.len() - 1
        };
        let root = push_node(&mut tree);
        stack.push((root, 0, rows.len()));
        while let Some((node, start, end)) = stack.pop() {
            let slice = &rows[start..end];
            let (mut w_tot, mut s_tot) = (0.0, 0.0);
            for &r in slice {
                let w = weight[r as usize];
                w_tot += w;
                s_tot += w * data.y[r as usize];
            }
            tree.value[node] = if w_tot > 0.0 { s_tot / w_tot } else { 0.0 };
            if w_tot < 2.0 * self.min_leaf || s_tot == 0.0 || s_tot == w_tot {
                continue;
            }
            // Fresh uniform subset of mtry columns.
            for k in 0..self.mtry {
                let swap = rng.random_range(k..data.p);
                self.col_perm.swap(k, swap);
            }
            let mut cands: Vec<usize> = self.col_perm[..self.mtry].to_vec();
            cands.sort_unstable();
            let mut best: Option<Split> = None;
            for j in cands {
                self.best_split_in_column(j, &rows[start..end], weight, w_tot, s_tot, &mut best);
            }
            let Some(split) = best else { continue };
            let vals = &data.values[split.col];
            let (lo, hi) = (vals[split.left_bin as usize], vals[split.right_bin as usize]);
            let mut thr = lo + (hi - lo) / 2.0;
            if !(thr >= lo && thr < hi) {
                thr = lo;
            }
            let col_bins = &data.bins[split.col * data.n..(split.col + 1) * data.n];
            let seg = &mut rows[start..end];
            let mut mid = 0;
            for k in 0..seg.len() {
                if col_bins[seg[k] as usize] <= split.left_bin {
                    seg.swap(k, mid);
                    mid += 1;
                }
            }
            gini_dec.push((split.col as u32, gini(w_tot, s_tot) - split.impurity));
            let l = push_node(&mut tree);
            let r = push_node(&mut tree);
            tree.feature[node] = split.col as u32;
            tree.threshold[node] = thr;
            tree.left[node] = l as u32;
            tree.right[node] = r as u32;
            stack.push((r, start + mid, end));
            stack.push((l, start, start + mid));
        }
        GrownTree { tree, gini: gini_dec }
    }
}

fn bootstrap_draws(rng: &mut StreamRng, n: usize, bootstrap: bool) -> Vec<u32> {
    if bootstrap {
        (0..n).map(|_| rng.random_range(0..n as u32)).collect()
    } else {
        (0..n as u32).collect()
    }
}

fn draws_to_weights(draws: &[u32], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for &d in draws {
        w[d as usize] += 1.0;
    }
    w
}

fn grow_forest(
    data: &Binned,
    rows: &Rows<'_>,
    n_trees: usize,
    mtry: usize,
    min_leaf: usize,
    bootstrap: bool,
    seed: u64,
) -> FittedForest {
    let grown: Vec<(GrownTree, Vec<u32>)> = (0..n_trees)
        .into_par_iter()
        .map_init(
            || Grower::new(data, mtry, min_leaf),
            |g, t| {
                let mut rng = substream(seed, &[tag::FOREST, t as u64]);
                let draws = bootstrap_draws(&mut rng, data.n, bootstrap);
                let weight = draws_to_weights(&draws, data.n);
                (g.grow(&mut rng, &weight), draws)
            },
        )
        .collect();

    let cols: Vec<usize> = (0..data.p).collect();
    let mut oob_sum = vec![0.0; data.n];
    let mut oob_cnt = vec![0u32; data.n];
    let mut gini_imp = vec![0.0; data.p];
    let mut trees = Vec::with_capacity(n_trees);
    let mut draws_all = Vec::with_capacity(n_trees);
    let per_tree_oob: Vec<Vec<(usize, f64)>> = grown
        .par_iter()
        .map(|(g, draws)| {
            let w = draws_to_weights(draws, data.n);
            (0..data.n)
                .filter(|&r| w[r] == 0.0)
                .map(|r| (r, g.tree.predict_row(rows.row(r), &cols)))
                .collect()
        })
        .collect();
    for ((g, draws), oob) in grown.into_iter().zip(per_tree_oob) {
        for (r, pred) in oob {
            oob_sum[r] += pred;
            oob_cnt[r] += 1;
        }
        for (c, d) in g.gini {
            gini_imp[c as usize] += d;
        }
        trees.push(g.tree);
        draws_all.push(draws);
    }
    let (mut se, mut m) = (0.0, 0usize);
    for r in 0..data.n {
        if oob_cnt[r] > 0 {
            let e = data.y[r] - oob_sum[r] / oob_cnt[r] as f64;
            se += e * e;
            m += 1;
        }
    }
    gini_imp.iter_mut().for_each(|g| *g /= n_trees.max(1) as f64);
    FittedForest {
        column_names: rows.x.column_names.clone(),
        trees,
        n_trees,
        mtry,
        min_leaf,
        oob_error: (m > 0).then(|| se / m as f64),
        tuning: Vec::new(),
        gini_importance: gini_imp,
        bootstrap: draws_all,
        n_fit_rows: data.n,
    }
}

/// Fits one forest per grid point and keeps the one with the lowest
/// out-of-bag MSE (first in grid order on ties).
pub fn fit_random_forest(rows: &Rows<'_>, cfg: &ForestConfig, seed: u64) -> Result<FittedForest> {
    if rows.len() < MIN_FOREST_ROWS {
        return Err(Error::TooFewRows {
            needed: MIN_FOREST_ROWS,
            have: rows.len(),
        });
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    let p = rows.x.n_cols();
    let mtry_grid = match (&cfg.mtry_grid, &cfg.mtry_fractions) {
        (Some(g), _) => g.clone(),
        (None, Some(f)) => fractional_mtry_grid(p, f),
        (None, None) => default_mtry_grid(p),
    };
    if mtry_grid.is_empty() || cfg.min_leaf_grid.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    let data = Binned::new(rows)?;
    if p == 0 {
        let ybar = data.y.iter().sum::<f64>() / data.n as f64;
        return Ok(FittedForest {
            column_names: Vec::new(),
            trees: vec![Tree::leaf(ybar); cfg.n_trees],
            n_trees: cfg.n_trees,
            mtry: 0,
            min_leaf: cfg.min_leaf_grid[0],
            oob_error: None,
            tuning: Vec::new(),
            gini_importance: Vec::new(),
            bootstrap: Vec::new(),
            n_fit_rows: data.n,
        });
    }

    let mut best: Option<FittedForest> = None;
    let mut tuning = Vec::new();
    for &mtry in &mtry_grid {
        for &min_leaf in &cfg.min_leaf_grid {
            let f = grow_forest(&data, rows, cfg.n_trees, mtry.clamp(1, p), min_leaf, cfg.bootstrap, seed);
            tuning.push(GridPoint {
                mtry: f.mtry,
                min_leaf,
                oob_mse: f.oob_error,
            });
            let better = match (&best, f.oob_error) {
                (None, _) => true,
                (Some(b), Some(e)) => b.oob_error.map_or(true, |be| e < be),
                (Some(_), None) => false,
            };
            if better {
                best = Some(f);
            }
        }
    }
    let mut best = best.expect("grid is nonempty");
    best.tuning = tuning;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub column: String,
    /// Mean over trees of the out-of-bag MSE increase after permuting the column.
    pub mean_decrease_accuracy: f64,
    /// Standard deviation of the per-tree increases.
    pub accuracy_sd: f64,
    pub mean_decrease_gini: f64,
}

/// Permutation and Gini importance. `rows` must be the rows the forest was fit on.
pub fn variable_importance(f: &FittedForest, rows: &Rows<'_>, seed: u64) -> Result<Vec<Importance>> {
    if rows.len() != f.n_fit_rows || f.bootstrap.len() != f.trees.len() {
        return Err(Error::ModelSpaceMismatch(
            "importance needs the forest's own fitting rows".into(),
        ));
    }
    let cols = f.column_map(rows)?;
    let p = f.column_names.len();
    let n = rows.len();
    let y = rows.outcomes_f64();
    let per_tree: Vec<Vec<(u32, f64)>> = f
        .trees
        .par_iter()
        .zip(&f.bootstrap)
        .enumerate()
        .map(|(t, (tree, draws))| {
            let w = draws_to_weights(draws, n);
            let oob: Vec<usize> = (0..n).filter(|&r| w[r] == 0.0).collect();
            if oob.is_empty() {
                return Vec::new();
            }
            let base: f64 = oob
                .iter()
                .map(|&r| {
                    let e = y[r] - tree.predict_row(rows.row(r), &cols);
                    e * e
                })
                .sum::<f64>()
                / oob.len() as f64;
            let mut rng = substream(seed, &[tag::IMPORTANCE, t as u64]);
            tree.used_features()
                .into_iter()
                .map(|c| {
                    let mut vals: Vec<f64> = oob.iter().map(|&r| rows.row(r)[cols[c as usize]]).collect();
                    vals.shuffle(&mut rng);
                    let err: f64 = oob
                        .iter()
                        .zip(&vals)
                        .map(|(&r, &v)| {
                            let e = y[r] - tree.predict_row_with(rows.row(r), &cols, c, v);
                            e * e
                        })
                        .sum::<f64>()
                        / oob.len() as f64;
                    (c, err - base)
                })
                .collect()
        })
        .collect();
    let nt = f.trees.len() as f64;
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    for tree in &per_tree {
        for &(c, d) in tree {
            sum[c as usize] += d;
            sum_sq[c as usize] += d * d;
        }
    }
    Ok((0..p)
        .map(|j| {
            let mean = sum[j] / nt;
            let var = (sum_sq[j] / nt - mean * mean).max(0.0);
            Importance {
                column: f.column_names[j].clone(),
                mean_decrease_accuracy: mean,
                accuracy_sd: var.sqrt(),
                mean_decrease_gini: f.gini_importance[j],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mtry_grid_rounding() {
        assert_eq!(default_mtry_grid(836), vec![29, 279, 84]);
        assert_eq!(default_mtry_grid(5), vec![2, 1]);
        assert_eq!(default_mtry_grid(1), vec![1]);
        assert_eq!(fractional_mtry_grid(625, &[0.1, 0.1, 0.0]), vec![63, 1]);
    }

    #[test]
    fn gini_of_pure_node_is_zero() {
        assert_eq!(gini(4.0, 0.0), 0.0);
        assert_eq!(gini(4.0, 4.0), 0.0);
        assert_eq!(gini(4.0, 2.0), 2.0);
    }
}
