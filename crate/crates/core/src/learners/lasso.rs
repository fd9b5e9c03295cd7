//! L1-penalized logistic regression by cyclic coordinate descent, with the
//! penalty chosen by stratified k-fold cross-validation.
//!
//! Objective, on columns standardized to mean 0 and sd 1 over the fitting rows:
//! `-(1/n) loglik(b0, beta) + lambda * |beta|_1`, intercept unpenalized.
//! Each outer step replaces the log-likelihood by its weighted least-squares
//! approximation at the current fit; the inner loop runs coordinate descent
//! on that quadratic over the active set, then over all columns to check the
//! optimality conditions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::linear::{
    check_outcomes, scaled_sparse_rows, sigmoid, standardize, Convergence, Design, FittedLinearModel,
    LassoInfo, LinearTerm, Standardization,
};
use crate::error::{Error, Result};
use crate::evaluation::metrics::binomial_deviance;
use crate::features::Rows;
use crate::rng::{substream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoConfig {
    pub n_folds: usize,
    pub n_lambda: usize,
    /// Smallest path value as a fraction of the largest.
    pub lambda_min_ratio: f64,
    /// Overrides the computed path when set (must be decreasing).
    pub lambda_path: Option<Vec<f64>>,
    pub max_outer: usize,
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            n_folds: 10,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            lambda_path: None,
            max_outer: 100,
            tol: 1e-7,
        }
    }
}

/// Soft-thresholding operator `sign(z) * max(|z| - gamma, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

const MIN_WEIGHT: f64 = 1e-5;

/// Standardized design in compressed-column form.
struct Problem {
    n: usize,
    y: Vec<f64>,
    /// Per kept column: (row, x / sd) for nonzero x.
    cols: Vec<Vec<(u32, f64)>>,
    /// mean / sd per kept column, so that the standardized value is `z - center`.
    center: Vec<f64>,
    st: Standardization,
}

impl Problem {
    fn new(rows: &Rows<'_>) -> Result<Problem> {
        let st = standardize(rows)?;
        let sparse = scaled_sparse_rows(rows, &st);
        let mut cols = vec![Vec::new(); st.keep.len()];
        for (i, r) in sparse.iter().enumerate() {
            for &(j, v) in r {
                cols[j as usize].push((i as u32, v));
            }
        }
        let center = st.mean.iter().zip(&st.sd).map(|(m, s)| m / s).collect();
        Ok(Problem {
            n: rows.len(),
            y: rows.outcomes_f64(),
            cols,
            center,
            st,
        })
    }

    fn p(&self) -> usize {
        self.cols.len()
    }

    /// Smallest penalty at which every slope is zero.
    fn lambda_max(&self) -> f64 {
        let n = self.n as f64;
        let ybar = self.y.iter().sum::<f64>() / n;
        let sum_r: f64 = self.y.iter().map(|y| y - ybar).sum();
        self.cols
            .iter()
            .zip(&self.center)
            .map(|(col, c)| {
                let s: f64 = col.iter().map(|&(i, z)| z * (self.y[i as usize] - ybar)).sum();
                ((s - c * sum_r) / n).abs()
            })
            .fold(0.0, f64::max)
    }

    fn eta(&self, s: &State) -> Vec<f64> {
        let shift: f64 = s.beta.iter().zip(&self.center).map(|(b, c)| b * c).sum();
        let mut eta = vec![s.b0 - shift; self.n];
        for (col, b) in self.cols.iter().zip(&s.beta) {
            if *b != 0.0 {
                for &(i, z) in col {
                    eta[i as usize] += b * z;
                }
            }
        }
        eta
    }

    fn null_state(&self) -> State {
        let ybar = self.y.iter().sum::<f64>() / self.n as f64;
        State {
            b0: (ybar / (1.0 - ybar)).ln(),
            beta: vec![0.0; self.p()],
        }
    }

    /// Minimizes the penalized objective at `lambda`, warm-starting from `s`.
    fn solve(&self, lambda: f64, s: &mut State, cfg: &LassoConfig) -> (usize, bool) {
        let n = self.n as f64;
        let p = self.p();
        let mut converged = false;
        let mut outer = 0;
        while outer < cfg.max_outer {
            outer += 1;
            let eta = self.eta(s);
            let mut w = vec![0.0; self.n];
            let mut e_hat = vec![0.0; self.n];
            for i in 0..self.n {
                let mu = sigmoid(eta[i]);
                w[i] = (mu * (1.0 - mu)).max(MIN_WEIGHT);
                e_hat[i] = (self.y[i] - mu) / w[i];
            }
            let w_sum: f64 = w.iter().sum();
            let mut g = 0.0;
            let mut s_we: f64 = w.iter().zip(&e_hat).map(|(a, b)| a * b).sum();
            let mut wz = vec![0.0; p];
            let mut a = vec![0.0; p];
            for j in 0..p {
                let (mut s1, mut s2) = (0.0, 0.0);
                for &(i, z) in &self.cols[j] {
                    let wi = w[i as usize];
                    s1 += wi * z;
                    s2 += wi * z * z;
                }
                let c = self.center[j];
                wz[j] = s1;
                a[j] = (s2 - 2.0 * c * s1 + c * c * w_sum) / n;
            }
            let before = s.clone();

            let update = |j: usize, s: &mut State, e_hat: &mut [f64], g: &mut f64, s_we: &mut f64| -> f64 {
                if a[j] <= 0.0 {
                    return 0.0;
                }
                let c = self.center[j];
                let dot: f64 = self.cols[j].iter().map(|&(i, z)| w[i as usize] * z * e_hat[i as usize]).sum();
                let grad = (dot + *g * wz[j] - c * *s_we) / n;
                let u = grad + a[j] * s.beta[j];
                let new = soft_threshold(u, lambda) / a[j];
                let d = new - s.beta[j];
                if d != 0.0 {
                    s.beta[j] = new;
                    for &(i, z) in &self.cols[j] {
                        e_hat[i as usize] -= d * z;
                    }
                    *g += d * c;
                    *s_we -= d * (wz[j] - c * w_sum);
                }
                a[j] * d * d
            };
            let intercept = |s: &mut State, g: &mut f64, s_we: &mut f64| -> f64 {
                let d = *s_we / w_sum;
                s.b0 += d;
                *g -= d;
                *s_we = 0.0;
                w_sum * d * d / n
            };

            loop {
                // Full pass; collects the active set.
                let mut max_change = intercept(s, &mut g, &mut s_we);
                for j in 0..p {
                    max_change = max_change.max(update(j, s, &mut e_hat, &mut g, &mut s_we));
                }
                if max_change < cfg.tol {
                    break;
                }
                let active: Vec<usize> = (0..p).filter(|&j| s.beta[j] != 0.0).collect();
                for _ in 0..10_000 {
                    let mut mc = intercept(s, &mut g, &mut s_we);
                    for &j in &active {
                        mc = mc.max(update(j, s, &mut e_hat, &mut g, &mut s_we));
                    }
                    if mc < cfg.tol {
                        break;
                    }
                }
            }

            let mut change = (s.b0 - before.b0).powi(2) * w_sum / n;
            for j in 0..p {
                change = change.max(a[j] * (s.beta[j] - before.beta[j]).powi(2));
            }
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
        if s.beta.iter().all(|b| *b == 0.0) {
            s.b0 = self.null_state().b0;
        }
        (outer, converged)
    }

    fn to_model(&self, rows: &Rows<'_>, s: &State, conv: Convergence, lasso: LassoInfo) -> FittedLinearModel {
        let names = &rows.x.column_names;
        FittedLinearModel {
            design: Design::Columns,
            intercept: s.b0,
            terms: self
                .st
                .keep
                .iter()
                .enumerate()
                .map(|(pos, &j)| LinearTerm {
                    name: names[j].clone(),
                    mean: self.st.mean[pos],
                    sd: self.st.sd[pos],
                    coef: s.beta[pos],
                })
                .collect(),
            dropped: self.st.dropped.iter().map(|&j| names[j].clone()).collect(),
            convergence: conv,
            lasso: Some(lasso),
        }
    }
}

#[derive(Debug, Clone)]
struct State {
    b0: f64,
    beta: Vec<f64>,
}

fn log_path(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n)
        .map(|k| (hi + (lo - hi) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Fits the penalized logit at a single penalty value, warm-started along a
/// short path from the null model.
pub fn fit_lasso_fixed(rows: &Rows<'_>, lambda: f64, cfg: &LassoConfig) -> Result<FittedLinearModel> {
    check_outcomes(rows, 2)?;
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let prob = Problem::new(rows)?;
    let mut s = prob.null_state();
    let lmax = prob.lambda_max();
    let mut path: Vec<f64> = if lmax > lambda && lmax > 0.0 {
        log_path(lmax, 20, (lambda.max(lmax * 1e-4)) / lmax)
    } else {
        Vec::new()
    };
    path.push(lambda);
    let mut conv = Convergence {
        converged: true,
        iterations: 0,
        rank_deficient: false,
        separation: false,
    };
    for &l in &path {
        let (it, ok) = prob.solve(l, &mut s, cfg);
        conv.iterations += it;
        conv.converged = ok;
    }
    let info = LassoInfo {
        lambda,
        lambda_path: vec![lambda],
        cv_deviance: Vec::new(),
        selected_index: 0,
    };
    Ok(prob.to_model(rows, &s, conv, info))
}

/// Outcome-stratified fold labels for the rows of a view.
pub fn stratified_folds(rows: &Rows<'_>, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, &[tag::LASSO_FOLDS]);
    let mut fold = vec![0; rows.len()];
    let mut offset = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..rows.len()).filter(|&k| rows.outcome(k) == class).collect();
        members.shuffle(&mut rng);
        for (pos, &k) in members.iter().enumerate() {
            fold[k] = (pos + offset) % n_folds;
        }
        offset += members.len();
    }
    fold
}

/// Cross-validated lasso logit: the penalty minimizing mean validation
/// deviance over stratified folds, refit on every row.
pub fn fit_lasso_cv(rows: &Rows<'_>, cfg: &LassoConfig, seed: u64) -> Result<FittedLinearModel> {
    if cfg.n_folds < 2 {
        return Err(Error::Config("n_folds must be >= 2".into()));
    }
    check_outcomes(rows, cfg.n_folds.max(2))?;
    let full = Problem::new(rows)?;
    let path = match &cfg.lambda_path {
        Some(p) if !p.is_empty() => p.clone(),
        Some(_) => return Err(Error::Config("empty lambda path".into())),
        None => log_path(full.lambda_max().max(1e-300), cfg.n_lambda.max(1), cfg.lambda_min_ratio),
    };

    let folds = stratified_folds(rows, cfg.n_folds, seed);
    let mut cv = vec![0.0; path.len()];
    let mut n_used = 0usize;
    for f in 0..cfg.n_folds {
        let train_idx: Vec<usize> = (0..rows.len()).filter(|&k| folds[k] != f).map(|k| rows.idx[k]).collect();
        let valid_idx: Vec<usize> = (0..rows.len()).filter(|&k| folds[k] == f).map(|k| rows.idx[k]).collect();
        let train = rows.x.rows(&train_idx);
        let valid = rows.x.rows(&valid_idx);
        if valid.is_empty() || check_outcomes(&train, 2).is_err() {
            continue;
        }
        let prob = Problem::new(&train)?;
        let mut s = prob.null_state();
        let y_valid = valid.outcomes();
        for (k, &l) in path.iter().enumerate() {
            prob.solve(l, &mut s, cfg);
            let model = prob.to_model(
                &train,
                &s,
                Convergence {
                    converged: true,
                    iterations: 0,
                    rank_deficient: false,
                    separation: false,
                },
                LassoInfo {
                    lambda: l,
                    lambda_path: Vec::new(),
                    cv_deviance: Vec::new(),
                    selected_index: 0,
                },
            );
            let pred = model.predict(&valid)?;
            cv[k] += binomial_deviance(&pred, &y_valid)? / y_valid.len() as f64;
        }
        n_used += 1;
    }
    if n_used == 0 {
        return Err(Error::SingleClass);
    }
    cv.iter_mut().for_each(|v| *v /= n_used as f64);
    let mut best = 0;
    for k in 1..cv.len() {
        if cv[k] < cv[best] {
            best = k;
        }
    }

    let mut s = full.null_state();
    let mut conv = Convergence {
        converged: true,
        iterations: 0,
        rank_deficient: false,
        separation: false,
    };
    for &l in &path[..=best] {
        let (it, ok) = full.solve(l, &mut s, cfg);
        conv.iterations += it;
        conv.converged = ok;
    }
    let info = LassoInfo {
        lambda: path[best],
        lambda_path: path.clone(),
        cv_deviance: cv,
        selected_index: best,
    };
    Ok(full.to_model(rows, &s, conv, info))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_closed_form() {
        for &(z, l) in &[(2.0, 0.5), (-2.0, 0.5), (0.3, 0.5), (-0.3, 0.5), (1.0, 0.0)] {
            let expected = f64::signum(z) * (f64::abs(z) - l).max(0.0);
            assert_eq!(soft_threshold(z, l), expected);
        }
    }

    #[test]
    fn path_is_log_spaced() {
        let p = log_path(2.0, 100, 1e-4);
        assert_eq!(p.len(), 100);
        assert!((p[0] - 2.0).abs() < 1e-15);
        assert!((p[99] - 2e-4).abs() < 1e-15);
        let r1 = p[1] / p[0];
        let r2 = p[50] / p[49];
        assert!((r1 - r2).abs() < 1e-12);
    }
}
