//! Purchase-probability predictors.

pub mod forest;
pub mod lasso;
pub(crate) mod linalg;
pub mod linear;

use serde::{Deserialize, Serialize};

use crate::domain::Money;
use crate::error::{Error, Result};
use crate::features::Rows;

pub use forest::{fit_random_forest, variable_importance, FittedForest, ForestConfig, Importance};
pub use lasso::{fit_lasso_cv, fit_lasso_fixed, soft_threshold, LassoConfig};
pub use linear::{fit_logit, fit_logit_surplus, sigmoid, FittedLinearModel};

/// Step-rule baseline: buy below the stated WTP, refuse above it, and buy
/// with probability `q` at exactly the stated WTP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdmBaseline {
    pub q: f64,
    /// True when no training row had price = WTP and `q` fell back to 0.5.
    pub fallback: bool,
}

pub fn bdm_predict(wtp: Money, price: Money, b: &BdmBaseline) -> f64 {
    match price.cmp(&wtp) {
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Greater => 0.0,
        std::cmp::Ordering::Equal => b.q,
    }
}

/// `q` = purchase frequency over training rows priced at the stated WTP.
pub fn fit_bdm(rows: &Rows<'_>) -> BdmBaseline {
    let (mut n, mut bought) = (0usize, 0usize);
    for k in 0..rows.len() {
        let m = rows.meta(k);
        if m.price == m.wtp {
            n += 1;
            bought += rows.outcome(k) as usize;
        }
    }
    if n == 0 {
        BdmBaseline { q: 0.5, fallback: true }
    } else {
        BdmBaseline {
            q: bought as f64 / n as f64,
            fallback: false,
        }
    }
}

impl BdmBaseline {
    pub fn predict(&self, rows: &Rows<'_>) -> Vec<f64> {
        (0..rows.len())
            .map(|k| {
                let m = rows.meta(k);
                bdm_predict(m.wtp, m.price, self)
            })
            .collect()
    }
}

/// Offset `x` (in cents) minimizing training MSE of `buy = 1{WTP - p + x >= 0}`;
/// ties go to the smallest offset.
pub fn debias_bdm_offset(rows: &Rows<'_>, offsets: &[Money]) -> Result<Money> {
    if offsets.is_empty() {
        return Err(Error::Config("offset grid is empty".into()));
    }
    if rows.is_empty() {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    let mut sorted = offsets.to_vec();
    sorted.sort();
    let mut best = (f64::INFINITY, sorted[0]);
    for x in sorted {
        let errors = (0..rows.len())
            .filter(|&k| {
                let m = rows.meta(k);
                let predicted = m.surplus_cents() + x.cents() as i64 >= 0;
                predicted != rows.outcome(k)
            })
            .count();
        let mse = errors as f64 / rows.len() as f64;
        if mse < best.0 {
            best = (mse, x);
        }
    }
    Ok(best.1)
}

/// Constant predictor at the training purchase frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbBuy {
    pub r: f64,
}

pub fn prob_buy_predict(rows: &Rows<'_>) -> Result<ProbBuy> {
    if rows.is_empty() {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    let bought = (0..rows.len()).filter(|&k| rows.outcome(k)).count();
    Ok(ProbBuy {
        r: bought as f64 / rows.len() as f64,
    })
}
