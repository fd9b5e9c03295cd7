//! Surplus-binned error curves and within-session trend checks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::Cohort;
use crate::error::{Error, Result};
use crate::features::RowMeta;

/// Rows sharing one exact value of stated WTP minus price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusBin {
    pub surplus_cents: i64,
    pub n: usize,
    pub purchase_freq: f64,
    /// Per model, aligned with the model list passed in; NaN when the model
    /// has no prediction in this bin.
    pub mse: Vec<f64>,
}

/// Groups rows by surplus and reports purchase frequency and per-model MSE.
/// `preds[m][k]` is model `m`'s prediction for row `k`, `None` if missing.
pub fn surplus_binned_mse(rows: &[(RowMeta, bool)], preds: &[Vec<Option<f64>>]) -> Result<Vec<SurplusBin>> {
    if let Some(p) = preds.iter().find(|p| p.len() != rows.len()) {
        return Err(Error::LengthMismatch(p.len(), rows.len()));
    }
    struct Acc {
        n: usize,
        bought: usize,
        se: Vec<(f64, usize)>,
    }
    let mut bins: BTreeMap<i64, Acc> = BTreeMap::new();
    for (k, (m, y)) in rows.iter().enumerate() {
        let acc = bins.entry(m.surplus_cents()).or_insert_with(|| Acc {
            n: 0,
            bought: 0,
            se: vec![(0.0, 0); preds.len()],
        });
        acc.n += 1;
        acc.bought += *y as usize;
        for (mi, p) in preds.iter().enumerate() {
            if let Some(v) = p[k] {
                let e = v - *y as u8 as f64;
                acc.se[mi].0 += e * e;
                acc.se[mi].1 += 1;
            }
        }
    }
    Ok(bins
        .into_iter()
        .map(|(s, a)| SurplusBin {
            surplus_cents: s,
            n: a.n,
            purchase_freq: a.bought as f64 / a.n as f64,
            mse: a
                .se
                .iter()
                .map(|&(se, n)| if n > 0 { se / n as f64 } else { f64::NAN })
                .collect(),
        })
        .collect())
}

pub fn write_surplus_bins(bins: &[SurplusBin], models: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut header = vec!["surplus_cents".to_string(), "n".into(), "purchase_freq".into()];
    header.extend(models.iter().map(|m| format!("mse_{m}")));
    w.write_record(&header)?;
    for b in bins {
        let mut rec = vec![b.surplus_cents.to_string(), b.n.to_string(), b.purchase_freq.to_string()];
        rec.extend(b.mse.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Slope on trial index with its asymptotic Wald test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCoef {
    pub coef: f64,
    pub std_error: f64,
    pub z: f64,
    /// Two-sided, standard normal reference.
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendDiagnostics {
    /// OLS of stated WTP (dollars) on BDM trial index.
    pub wtp: TrendCoef,
    /// Logit of the Buy decision on Buy trial index.
    pub buy: TrendCoef,
}

fn wald(coef: f64, se: f64, n: usize) -> TrendCoef {
    let z = coef / se;
    let normal = Normal::standard();
    TrendCoef {
        coef,
        std_error: se,
        z,
        p_value: 2.0 * (1.0 - normal.cdf(z.abs())),
        n,
    }
}

fn centered(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let xc: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sxx: f64 = xc.iter().map(|v| v * v).sum();
    if x.len() < 3 || !(sxx > 0.0) {
        return Err(Error::Degenerate("trial index is constant".into()));
    }
    Ok((xc, sxx))
}

/// Ordinary least squares slope of `y` on `x` with an intercept.
pub fn ols_trend(x: &[f64], y: &[f64]) -> Result<TrendCoef> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let (xc, sxx) = centered(x)?;
    let n = x.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let b = xc.iter().zip(y).map(|(a, v)| a * (v - ybar)).sum::<f64>() / sxx;
    let rss: f64 = xc.iter().zip(y).map(|(a, v)| (v - ybar - b * a).powi(2)).sum();
    let sigma2 = rss / (n - 2) as f64;
    Ok(wald(b, (sigma2 / sxx).sqrt(), n))
}

/// Two-parameter logistic regression by Newton's method.
pub fn logit_trend(x: &[f64], y: &[bool]) -> Result<TrendCoef> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let (xc, _) = centered(x)?;
    let n1 = y.iter().filter(|&&b| b).count();
    if n1 == 0 || n1 == y.len() {
        return Err(Error::SingleClass);
    }
    let (mut a, mut b) = (((n1 as f64) / (y.len() - n1) as f64).ln(), 0.0);
    let mut info = [0.0; 3];
    for _ in 0..100 {
        let (mut g0, mut g1) = (0.0, 0.0);
        info = [0.0; 3];
        for (xi, &yi) in xc.iter().zip(y) {
            let p = crate::learners::sigmoid(a + b * xi);
            let r = yi as u8 as f64 - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            info[0] += w;
            info[1] += w * xi;
            info[2] += w * xi * xi;
        }
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det > 0.0) {
            return Err(Error::Degenerate("singular information matrix".into()));
        }
        let da = (info[2] * g0 - info[1] * g1) / det;
        let db = (info[0] * g1 - info[1] * g0) / det;
        a += da;
        b += db;
        if g0.abs().max(g1.abs()) < 1e-10 {
            break;
        }
    }
    let det = info[0] * info[2] - info[1] * info[1];
    Ok(wald(b, (info[0] / det).sqrt(), x.len()))
}

pub fn demand_trend_diagnostics(c: &Cohort) -> Result<TrendDiagnostics> {
    let wx: Vec<f64> = c.wtp.iter().map(|r| r.trial_index as f64).collect();
    let wy: Vec<f64> = c.wtp.iter().map(|r| r.wtp.dollars()).collect();
    let bx: Vec<f64> = c.buy.iter().map(|b| b.trial_index as f64).collect();
    let by: Vec<bool> = c.buy.iter().map(|b| b.bought).collect();
    Ok(TrendDiagnostics {
        wtp: ols_trend(&wx, &wy)?,
        buy: logit_trend(&bx, &by)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v + if *v as i32 % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let t = ols_trend(&x, &y).unwrap();
        assert!((t.coef - 0.5).abs() < 0.01);
        assert!(t.p_value < 1e-6);
    }

    #[test]
    fn constant_regressor_is_degenerate() {
        assert!(matches!(ols_trend(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn logit_trend_symmetric_data_has_zero_slope() {
        let x = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        let y = [true, false, true, false, true, false];
        let t = logit_trend(&x, &y).unwrap();
        assert!(t.coef.abs() < 1e-12);
        assert!((t.p_value - 1.0).abs() < 1e-9);
    }
}
