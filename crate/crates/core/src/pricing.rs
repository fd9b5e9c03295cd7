//! Stochastic demand curves and revenue-maximizing posted prices.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Cohort, ItemId, Money, SubjectId, GRID_CENTS, MAX_WTP_CENTS};
use crate::error::{Error, Result};
use crate::features::FeatureBuilder;
use crate::model::TrainedModel;

/// The 23 posted prices $0.25, $0.50, ..., $5.75.
pub fn price_lattice() -> Vec<Money> {
    (GRID_CENTS..=MAX_WTP_CENTS)
        .step_by(GRID_CENTS as usize)
        .map(|c| Money::from_cents(c).expect("lattice price"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    pub subject: SubjectId,
    pub item: ItemId,
    /// (price, predicted purchase probability), ascending in price.
    pub grid: Vec<(Money, f64)>,
}

/// Price at which the curve crosses probability one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservationValue {
    /// Lowest crossing, linearly interpolated between lattice prices (dollars).
    pub dollars: f64,
    pub n_crossings: usize,
}

impl ReservationValue {
    pub fn ambiguous(&self) -> bool {
        self.n_crossings > 1
    }
}

impl DemandCurve {
    /// Number of adjacent lattice steps where the probability rises with price.
    pub fn monotonicity_violations(&self) -> usize {
        self.grid.windows(2).filter(|w| w[1].1 > w[0].1).count()
    }

    /// `None` when the curve never crosses one half.
    pub fn reservation_value(&self) -> Option<ReservationValue> {
        let mut first = None;
        let mut n = 0;
        for w in self.grid.windows(2) {
            let ((p0, q0), (p1, q1)) = (w[0], w[1]);
            let (a, b) = (q0 - 0.5, q1 - 0.5);
            if a == 0.0 || a * b < 0.0 {
                n += 1;
                if first.is_none() {
                    let t = if a == 0.0 { 0.0 } else { a / (a - b) };
                    first = Some(p0.dollars() + t * (p1.dollars() - p0.dollars()));
                }
            }
        }
        if let Some(&(p, q)) = self.grid.last() {
            if q == 0.5 && self.grid.len() > 1 {
                n += 1;
                first.get_or_insert(p.dollars());
            }
        }
        first.map(|dollars| ReservationValue { dollars, n_crossings: n })
    }
}

fn predict_at(model: &TrainedModel, b: &FeatureBuilder, s: SubjectId, j: ItemId, prices: &[Money]) -> Result<Vec<f64>> {
    let x = b.rows_at_prices(s, j, prices, model.spec.matrix_space(), model.item_fe_dropped);
    model.predict(&x.all())
}

/// Predicted purchase probability at every lattice price for one pair.
pub fn demand_curve(model: &TrainedModel, b: &FeatureBuilder, subject: SubjectId, item: ItemId) -> Result<DemandCurve> {
    if subject.index() >= b.n_subjects() || item.index() >= b.n_items() {
        return Err(Error::Config(format!("no subject {} / item {} in cohort", subject.0, item.0)));
    }
    let prices = price_lattice();
    let probs = predict_at(model, b, subject, item, &prices)?;
    Ok(DemandCurve {
        subject,
        item,
        grid: prices.into_iter().zip(probs).collect(),
    })
}

/// Exhaustive argmax of price × probability; ties go to the lowest price.
pub fn revenue_maximizing_price(curve: &DemandCurve) -> Result<(Money, f64)> {
    let mut best: Option<(Money, f64)> = None;
    for &(p, q) in &curve.grid {
        let r = p.dollars() * q;
        if best.is_none_or(|(_, br)| r > br) {
            best = Some((p, r));
        }
    }
    best.ok_or_else(|| Error::Config("empty demand curve".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub subject: SubjectId,
    pub item: ItemId,
    pub wtp: Money,
    pub p_star: Money,
    /// Expected revenue in dollars under the truth model's curve.
    pub rev_wtp: f64,
    pub rev_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingSummary {
    pub n_pairs: usize,
    pub mean_rev_wtp: f64,
    pub mean_rev_star: f64,
    /// Percent change of mean revenue from pricing at WTP to pricing at p*.
    pub gain_pct: f64,
    pub share_positive_gain: f64,
    pub share_nonnegative_gain: f64,
    pub corr_p_star_wtp: f64,
    pub mean_diff_dollars: f64,
    pub mean_abs_diff_dollars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingReport {
    pub pricing_model: String,
    pub truth_model: String,
    pub summary: PricingSummary,
    pub results: Vec<PricingResult>,
}

/// Sets p* from `pricing`'s curves and scores both p* and p = WTP on `truth`'s
/// curves, for every subject-item pair of the cohort.
pub fn revenue_comparison(pricing: &TrainedModel, truth: &TrainedModel, c: &Cohort) -> Result<PricingReport> {
    let b = FeatureBuilder::new(c);
    let pairs: Vec<(SubjectId, ItemId)> = (0..c.n_subjects() as u32)
        .flat_map(|s| (0..c.n_items() as u32).map(move |j| (SubjectId(s), ItemId(j))))
        .collect();
    let results: Vec<PricingResult> = pairs
        .par_iter()
        .map(|&(s, j)| {
            let wtp = b.wtp(s, j);
            let curve = demand_curve(pricing, &b, s, j)?;
            let (p_star, _) = revenue_maximizing_price(&curve)?;
            let truth_probs = predict_at(truth, &b, s, j, &[p_star, wtp])?;
            Ok(PricingResult {
                subject: s,
                item: j,
                wtp,
                p_star,
                rev_star: p_star.dollars() * truth_probs[0],
                rev_wtp: wtp.dollars() * truth_probs[1],
            })
        })
        .collect::<Result<_>>()?;
    Ok(PricingReport {
        pricing_model: pricing.spec.to_string(),
        truth_model: truth.spec.to_string(),
        summary: summarize(&results)?,
        results,
    })
}

fn summarize(r: &[PricingResult]) -> Result<PricingSummary> {
    if r.is_empty() {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    let n = r.len() as f64;
    let mean = |f: &dyn Fn(&PricingResult) -> f64| r.iter().map(f).sum::<f64>() / n;
    let mean_rev_wtp = mean(&|x| x.rev_wtp);
    let mean_rev_star = mean(&|x| x.rev_star);
    let ps: Vec<f64> = r.iter().map(|x| x.p_star.dollars()).collect();
    let ws: Vec<f64> = r.iter().map(|x| x.wtp.dollars()).collect();
    Ok(PricingSummary {
        n_pairs: r.len(),
        mean_rev_wtp,
        mean_rev_star,
        gain_pct: 100.0 * (mean_rev_star / mean_rev_wtp - 1.0),
        share_positive_gain: r.iter().filter(|x| x.rev_star > x.rev_wtp).count() as f64 / n,
        share_nonnegative_gain: r.iter().filter(|x| x.rev_star >= x.rev_wtp).count() as f64 / n,
        corr_p_star_wtp: pearson(&ps, &ws),
        mean_diff_dollars: mean(&|x| x.p_star.dollars() - x.wtp.dollars()),
        mean_abs_diff_dollars: mean(&|x| (x.p_star.dollars() - x.wtp.dollars()).abs()),
    })
}

/// NaN when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

impl PricingReport {
    /// subject_id,item_id,wtp_cents,p_star_cents,rev_wtp,rev_star
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        w.write_record(["subject_id", "item_id", "wtp_cents", "p_star_cents", "rev_wtp", "rev_star"])?;
        for r in &self.results {
            w.write_record([
                r.subject.0.to_string(),
                r.item.0.to_string(),
                r.wtp.cents().to_string(),
                r.p_star.cents().to_string(),
                r.rev_wtp.to_string(),
                r.rev_star.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(probs: &[f64]) -> DemandCurve {
        DemandCurve {
            subject: SubjectId(0),
            item: ItemId(0),
            grid: price_lattice().into_iter().zip(probs.iter().copied()).collect(),
        }
    }

    #[test]
    fn lattice_has_23_points() {
        let l = price_lattice();
        assert_eq!(l.len(), 23);
        assert_eq!((l[0].cents(), l[22].cents()), (25, 575));
    }

    #[test]
    fn constant_curve_prices_at_top() {
        let (p, r) = revenue_maximizing_price(&curve(&[0.4; 23])).unwrap();
        assert_eq!(p.cents(), 575);
        assert!((r - 2.3).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_price() {
        // $0.50 * 1.0 == $1.00 * 0.5
        let mut probs = vec![0.0; 23];
        probs[1] = 1.0;
        probs[3] = 0.5;
        assert_eq!(revenue_maximizing_price(&curve(&probs)).unwrap().0.cents(), 50);
    }

    #[test]
    fn reservation_value_interpolates() {
        let probs: Vec<f64> = (0..23).map(|k| if k < 7 { 1.0 } else { 0.0 }).collect();
        let rv = curve(&probs).reservation_value().unwrap();
        // Crosses between $1.75 and $2.00.
        assert!((rv.dollars - 1.875).abs() < 1e-12);
        assert!(!rv.ambiguous());
        let mut wobbly = probs.clone();
        wobbly[10] = 0.9;
        assert_eq!(curve(&wobbly).reservation_value().unwrap().n_crossings, 3);
        assert_eq!(curve(&wobbly).monotonicity_violations(), 1);
    }
}
