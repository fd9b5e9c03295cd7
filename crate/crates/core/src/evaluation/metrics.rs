//! Scalar prediction metrics.

use crate::error::{Error, Result};

const DEVIANCE_CLIP: f64 = 1e-12;

fn check(pred: &[f64], y: &[bool]) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::LengthMismatch(pred.len(), y.len()));
    }
    if pred.is_empty() {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    if let Some(p) = pred.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("prediction {p}")));
    }
    Ok(())
}

/// Mean squared error between probabilities and 0/1 outcomes.
pub fn mse(pred: &[f64], y: &[bool]) -> Result<f64> {
    check(pred, y)?;
    let s: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, &b)| {
            let d = p - b as u8 as f64;
            d * d
        })
        .sum();
    Ok(s / pred.len() as f64)
}

/// Negative binomial log-likelihood summed over rows, with probabilities
/// clipped to `[1e-12, 1 - 1e-12]`.
pub fn binomial_deviance(pred: &[f64], y: &[bool]) -> Result<f64> {
    check(pred, y)?;
    Ok(pred
        .iter()
        .zip(y)
        .map(|(&p, &b)| {
            let p = p.clamp(DEVIANCE_CLIP, 1.0 - DEVIANCE_CLIP);
            -if b { p.ln() } else { (1.0 - p).ln() }
        })
        .sum())
}

/// Area under the ROC curve; ties count one half. Errors on a single-class sample.
pub fn auc(pred: &[f64], y: &[bool]) -> Result<f64> {
    check(pred, y)?;
    let n1 = y.iter().filter(|&&b| b).count() as u64;
    let n0 = y.len() as u64 - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    // Twice the Mann-Whitney U, kept in integers.
    let mut u2: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pred[order[j]] == pred[order[i]] {
            j += 1;
        }
        let pos = order[i..j].iter().filter(|&&k| y[k]).count() as u64;
        let neg = (j - i) as u64 - pos;
        u2 += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(u2 as f64 / (2 * n1 * n0) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_known() {
        let v = mse(&[0.5, 1.0, 0.0], &[true, true, true]).unwrap();
        assert!((v - (0.25 + 0.0 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_ties_and_perfect() {
        assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.5], &[true]), Err(Error::SingleClass)));
    }

    #[test]
    fn deviance_clips() {
        let d = binomial_deviance(&[0.0], &[true]).unwrap();
        assert!((d - 27.631021115928547).abs() < 1e-9);
        let half = binomial_deviance(&[0.5; 4], &[true, false, true, true]).unwrap();
        assert!((half - 4.0 * 2f64.ln()).abs() < 1e-12);
    }
}
