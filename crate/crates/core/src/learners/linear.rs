//! Logistic models: IRLS maximum likelihood and the surplus-restricted design.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::linalg::Cholesky;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Rows};

/// Ridge added to every standardized slope in the Newton system.
pub const IRLS_RIDGE: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;
pub const IRLS_SCORE_TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude mean a fitted probability within
/// about 3e-7 of 0 or 1, i.e. (quasi-)separation.
const SEPARATION_ETA: f64 = 15.0;

/// How the model's inputs are derived from a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    /// Named columns of the matrix.
    Columns,
    /// Surplus (WTP − price) with item and subject effects, rebuilt from row meta.
    Surplus,
}

/// One retained input column with its training-time standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Coefficient on the standardized column.
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub rank_deficient: bool,
    /// Some fitted probability is numerically 0 or 1.
    pub separation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoInfo {
    pub lambda: f64,
    pub lambda_path: Vec<f64>,
    /// Mean validation deviance per path point (per-row, averaged over folds).
    pub cv_deviance: Vec<f64>,
    pub selected_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinearModel {
    pub design: Design,
    /// Intercept on the standardized scale.
    pub intercept: f64,
    pub terms: Vec<LinearTerm>,
    /// Columns seen at fit time but dropped for zero variance.
    pub dropped: Vec<String>,
    pub convergence: Convergence,
    pub lasso: Option<LassoInfo>,
}

impl FittedLinearModel {
    /// Coefficients and intercept on the original column scale.
    pub fn raw_coefficients(&self) -> (f64, Vec<(String, f64)>) {
        let mut b0 = self.intercept;
        let coefs = self
            .terms
            .iter()
            .map(|t| {
                b0 -= t.coef * t.mean / t.sd;
                (t.name.clone(), t.coef / t.sd)
            })
            .collect();
        (b0, coefs)
    }

    pub fn n_nonzero(&self) -> usize {
        self.terms.iter().filter(|t| t.coef != 0.0).count()
    }

    fn linear_predictor(&self, rows: &Rows<'_>) -> Result<Vec<f64>> {
        let owned;
        let (x, idx): (&FeatureMatrix, Vec<usize>) = match self.design {
            Design::Columns => (rows.x, rows.idx.clone()),
            Design::Surplus => {
                owned = surplus_design(rows);
                (&owned, (0..rows.len()).collect())
            }
        };
        let lookup: HashMap<&str, usize> = x
            .column_names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.as_str(), j))
            .collect();
        let cols: Vec<usize> = self
            .terms
            .iter()
            .map(|t| {
                lookup
                    .get(t.name.as_str())
                    .copied()
                    .ok_or_else(|| Error::ModelSpaceMismatch(format!("column {} not in feature matrix", t.name)))
            })
            .collect::<Result<_>>()?;
        Ok(idx
            .iter()
            .map(|&i| {
                let row = x.row(i);
                self.terms
                    .iter()
                    .zip(&cols)
                    .fold(self.intercept, |acc, (t, &j)| acc + t.coef * (row[j] - t.mean) / t.sd)
            })
            .collect())
    }

    pub fn predict(&self, rows: &Rows<'_>) -> Result<Vec<f64>> {
        Ok(self.linear_predictor(rows)?.into_iter().map(sigmoid).collect())
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Per-row log-likelihood contribution, stable for large |eta|.
pub(crate) fn log_lik(y: f64, eta: f64) -> f64 {
    // y*eta - log(1 + e^eta)
    let softplus = if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    };
    y * eta - softplus
}

/// Column statistics on the given rows; columns with zero variance are flagged.
pub(crate) struct Standardization {
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub dropped: Vec<usize>,
}

pub(crate) fn standardize(rows: &Rows<'_>) -> Result<Standardization> {
    let p = rows.x.n_cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; p];
    for k in 0..rows.len() {
        for (m, v) in mean.iter_mut().zip(rows.row(k)) {
            *m += v;
        }
    }
    for (j, m) in mean.iter_mut().enumerate() {
        if !m.is_finite() {
            return Err(Error::NonFinite(rows.x.column_names[j].clone()));
        }
        *m /= n;
    }
    let mut ss = vec![0.0; p];
    for k in 0..rows.len() {
        for ((s, v), m) in ss.iter_mut().zip(rows.row(k)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut st = Standardization {
        keep: Vec::new(),
        mean: Vec::new(),
        sd: Vec::new(),
        dropped: Vec::new(),
    };
    for j in 0..p {
        let sd = (ss[j] / n).sqrt();
        if !sd.is_finite() {
            return Err(Error::NonFinite(rows.x.column_names[j].clone()));
        }
        if sd > 1e-12 * (1.0 + mean[j].abs()) {
            st.keep.push(j);
            st.mean.push(mean[j]);
            st.sd.push(sd);
        } else {
            st.dropped.push(j);
        }
    }
    Ok(st)
}

pub(crate) fn check_outcomes(rows: &Rows<'_>, min_rows: usize) -> Result<()> {
    if rows.len() < min_rows {
        return Err(Error::TooFewRows {
            needed: min_rows,
            have: rows.len(),
        });
    }
    let pos = (0..rows.len()).filter(|&k| rows.outcome(k)).count();
    if pos == 0 || pos == rows.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Sparse rows in the scaled, uncentered basis `x / sd` of the kept columns.
pub(crate) fn scaled_sparse_rows(rows: &Rows<'_>, st: &Standardization) -> Vec<Vec<(u32, f64)>> {
    (0..rows.len())
        .map(|k| {
            let row = rows.row(k);
            st.keep
                .iter()
                .enumerate()
                .filter_map(|(pos, &j)| {
                    let v = row[j];
                    (v != 0.0).then(|| (pos as u32, v / st.sd[pos]))
                })
                .collect()
        })
        .collect()
}

/// Maximum-likelihood logit by iteratively reweighted least squares.
///
/// Columns are standardized on the fitting rows; zero-variance columns are
/// dropped. A fixed ridge of [`IRLS_RIDGE`] on the standardized slopes keeps
/// the Newton system solvable when the design is rank deficient, in which case
/// the result is flagged rather than rejected.
pub fn fit_logit(rows: &Rows<'_>) -> Result<FittedLinearModel> {
    fit_logit_design(rows, Design::Columns)
}

fn fit_logit_design(rows: &Rows<'_>, design: Design) -> Result<FittedLinearModel> {
    check_outcomes(rows, 2)?;
    let st = standardize(rows)?;
    let p = st.keep.len();
    let dim = p + 1;
    let z = scaled_sparse_rows(rows, &st);
    let y = rows.outcomes_f64();
    let n = y.len();

    // beta[0] is the intercept of the uncentered basis; slopes match the
    // centered basis exactly, so the ridge is the same either way.
    let mut beta = vec![0.0; dim];
    let ybar = y.iter().sum::<f64>() / n as f64;
    beta[0] = (ybar / (1.0 - ybar)).ln();

    let eta_of = |beta: &[f64], k: usize| -> f64 {
        z[k].iter().fold(beta[0], |acc, &(j, v)| acc + beta[j as usize + 1] * v)
    };
    let objective = |beta: &[f64]| -> f64 {
        let ll: f64 = (0..n).map(|k| log_lik(y[k], eta_of(beta, k))).sum();
        ll - 0.5 * IRLS_RIDGE * beta[1..].iter().map(|b| b * b).sum::<f64>()
    };

    let mut conv = Convergence {
        converged: false,
        iterations: 0,
        rank_deficient: false,
        separation: false,
    };
    let mut obj = objective(&beta);
    let mut h = vec![0.0; dim * dim];
    let mut g = vec![0.0; dim];
    for iter in 0..IRLS_MAX_ITER {
        h.iter_mut().for_each(|v| *v = 0.0);
        g.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n {
            let mu = sigmoid(eta_of(&beta, k));
            let w = mu * (1.0 - mu);
            let r = y[k] - mu;
            g[0] += r;
            h[0] += w;
            for (a, &(ja, va)) in z[k].iter().enumerate() {
                let ia = ja as usize + 1;
                g[ia] += r * va;
                h[ia * dim] += w * va;
                for &(jb, vb) in &z[k][..=a] {
                    h[ia * dim + jb as usize + 1] += w * va * vb;
                }
            }
        }
        for j in 1..dim {
            g[j] -= IRLS_RIDGE * beta[j];
            h[j * dim + j] += IRLS_RIDGE;
        }
        let max_score = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        conv.iterations = iter;
        if max_score < IRLS_SCORE_TOL {
            conv.converged = true;
            break;
        }

        let chol = factor_with_jitter(&mut h, dim, &mut conv);
        let step = match chol {
            Some(c) => c.solve(&g),
            None => break,
        };

        // Step halving until the penalized likelihood does not decrease.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_obj = objective(&cand);
            if cand_obj >= obj - 1e-12 * obj.abs().max(1.0) {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        conv.iterations = iter + 1;
        if !accepted {
            break;
        }
    }
    conv.separation = (0..n).any(|k| eta_of(&beta, k).abs() > SEPARATION_ETA);

    let intercept = beta[0]
        + st
            .mean
            .iter()
            .zip(&st.sd)
            .zip(&beta[1..])
            .map(|((m, s), b)| b * m / s)
            .sum::<f64>();
    let names = &rows.x.column_names;
    Ok(FittedLinearModel {
        design,
        intercept,
        terms: st
            .keep
            .iter()
            .enumerate()
            .map(|(pos, &j)| LinearTerm {
                name: names[j].clone(),
                mean: st.mean[pos],
                sd: st.sd[pos],
                coef: beta[pos + 1],
            })
            .collect(),
        dropped: st.dropped.iter().map(|&j| names[j].clone()).collect(),
        convergence: conv,
        lasso: None,
    })
}

/// Factors `h`, raising the diagonal jitter until it is positive definite.
fn factor_with_jitter(h: &mut [f64], dim: usize, conv: &mut Convergence) -> Option<Cholesky> {
    let max_diag = (0..dim).map(|i| h[i * dim + i]).fold(0.0f64, f64::max).max(1.0);
    let mut jitter = 0.0;
    for attempt in 0..12 {
        if attempt > 0 {
            let add = max_diag * 1e-12 * 10f64.powi(attempt);
            for i in 1..dim {
                h[i * dim + i] += add - jitter;
            }
            jitter = add;
            conv.rank_deficient = true;
        }
        if let Some(c) = Cholesky::factor(h, dim) {
            if c.min_pivot_ratio < 1e-9 {
                conv.rank_deficient = true;
            }
            return Some(c);
        }
    }
    None
}

/// Design matrix of the surplus-restricted logit, built from row meta.
///
/// Columns: surplus, item indicators 2..J, surplus × item 2..J, subject
/// indicators 2..S, surplus × subject 2..S; surplus in dollars.
pub fn surplus_design(rows: &Rows<'_>) -> FeatureMatrix {
    let (s_n, j_n) = (rows.x.n_subjects, rows.x.n_items);
    let mut names = vec!["surplus".to_string()];
    let mut flags = vec![false];
    names.extend((1..j_n).map(|k| format!("item_{}", k + 1)));
    names.extend((1..j_n).map(|k| format!("surplus_x_item_{}", k + 1)));
    names.extend((1..s_n).map(|k| format!("subject_{}", k + 1)));
    names.extend((1..s_n).map(|k| format!("surplus_x_subject_{}", k + 1)));
    flags.extend(std::iter::repeat(true).take(2 * (j_n - 1)));
    flags.extend(std::iter::repeat(false).take(2 * (s_n.max(1) - 1)));
    let p = names.len();
    let mut data = vec![0.0; rows.len() * p];
    for k in 0..rows.len() {
        let m = rows.meta(k);
        let sur = m.surplus_cents() as f64 / 100.0;
        let out = &mut data[k * p..(k + 1) * p];
        out[0] = sur;
        let (j, s) = (m.item.index(), m.subject.index());
        if j >= 1 {
            out[j] = 1.0;
            out[j_n - 1 + j] = sur;
        }
        if s >= 1 {
            let base = 1 + 2 * (j_n - 1);
            out[base + s - 1] = 1.0;
            out[base + (s_n - 1) + s - 1] = sur;
        }
    }
    FeatureMatrix {
        column_names: names,
        data,
        outcome: rows.outcomes(),
        meta: rows.idx.iter().map(|&i| rows.x.meta[i]).collect(),
        n_subjects: s_n,
        n_items: j_n,
        item_indexed: flags,
    }
}

/// Logit with price and WTP entering only through their difference.
pub fn fit_logit_surplus(rows: &Rows<'_>) -> Result<FittedLinearModel> {
    check_outcomes(rows, 2)?;
    let x = surplus_design(rows);
    fit_logit_design(&x.all(), Design::Surplus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
        assert!((log_lik(1.0, 800.0)).abs() < 1e-300);
        assert!((log_lik(0.0, 0.0) + std::f64::consts::LN_2).abs() < 1e-15);
    }
}
