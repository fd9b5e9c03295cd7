//! Synthetic cohort generator.
//!
//! Each subject has a latent dollar value for every item,
//! `v = max(item_mean + hunger + taste, 0) + bonus`. Stated WTP is a noisy,
//! downward-shifted reading of that value rounded onto the 25-cent lattice,
//! binary choices follow a logit in the value gap with response times that
//! shrink as the gap grows, and Buy decisions follow a logit in `v - price`.

use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AfcTrial, BuyTrial, Cohort, Item, ItemId, Money, PriceSource, Subject, SubjectId, WtpRecord,
    GRID_CENTS, MAX_WTP_CENTS,
};
use crate::error::{Error, Result};
use crate::rng::{substream, tag, StreamRng};

/// Default catalogue: (abbrev, name, mean latent value in dollars).
pub const DEFAULT_ITEMS: [(&str, &str, f64); 20] = [
    ("BC", "Cliff Bar Peanut Crunch", 2.30),
    ("CM", "Chex Mix", 1.90),
    ("CK", "Coke", 1.35),
    ("GC", "Godiva Dark Chocolate", 2.60),
    ("GB", "Green & Blacks Organic Chocolate", 2.40),
    ("HS", "Hershey's Chocolate", 1.70),
    ("JP", "Justin's Peanut Butter Cup", 2.20),
    ("KN", "KIND Nuts & Spices", 2.50),
    ("LC", "Luna Choco Cupcake", 2.00),
    ("NG", "Naked Green Machine", 3.00),
    ("NM", "Naked Mango", 3.20),
    ("NB", "Naturally Bare Banana", 1.80),
    ("NV", "Nature Valley Crunchy", 1.75),
    ("OP", "Organic Peeled Paradise", 2.10),
    ("PC", "Pretzel Crisps Original", 1.85),
    ("PO", "Pringles Original", 1.95),
    ("RB", "Red Bull", 2.45),
    ("SB", "Simply Balanced Blueberries", 2.15),
    ("SF", "Starbuck's Frappuccino", 2.85),
    ("VC", "Vita Coco", 2.55),
];

/// Latent-model and design parameters. Dollar amounts unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub n_items: usize,
    pub seed: u64,
    /// Mean latent value per item; `None` cycles [`DEFAULT_ITEMS`].
    pub item_mean_value: Option<Vec<f64>>,
    pub subject_hunger_sd: f64,
    pub taste_sd: f64,
    pub wtp_bias: f64,
    pub wtp_noise_sd: f64,
    pub choice_temperature: f64,
    pub buy_noise_sd: f64,
    pub rt_base_ms: f64,
    pub rt_slope_ms_per_dollar: f64,
    pub rt_noise_sd: f64,
    pub gold_bonus: f64,
    pub silver_bonus: f64,
    /// Linear drift of stated WTP per BDM trial (off by default).
    pub wtp_drift_per_trial: f64,
    /// Linear drift of latent value per Buy trial (off by default).
    pub buy_drift_per_trial: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_subjects: 55,
            n_items: 20,
            seed: 0,
            item_mean_value: None,
            subject_hunger_sd: 0.8,
            taste_sd: 0.9,
            wtp_bias: 0.25,
            wtp_noise_sd: 0.6,
            choice_temperature: 0.5,
            buy_noise_sd: 0.05,
            rt_base_ms: 500.0,
            rt_slope_ms_per_dollar: 150.0,
            rt_noise_sd: 150.0,
            gold_bonus: 4.0,
            silver_bonus: 2.0,
            wtp_drift_per_trial: 0.0,
            buy_drift_per_trial: 0.0,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..SimConfig::default()
        }
    }

    pub fn item_means(&self) -> Vec<f64> {
        match &self.item_mean_value {
            Some(v) => v.clone(),
            None => (0..self.n_items)
                .map(|j| DEFAULT_ITEMS[j % DEFAULT_ITEMS.len()].2)
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_items < 2 {
            return bad("n_items must be >= 2");
        }
        if self.n_subjects < 1 {
            return bad("n_subjects must be >= 1");
        }
        if let Some(v) = &self.item_mean_value {
            if v.len() != self.n_items {
                return Err(Error::Config(format!(
                    "item_mean_value has {} entries, n_items is {}",
                    v.len(),
                    self.n_items
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad("item_mean_value must be finite");
            }
        }
        let sds = [
            ("subject_hunger_sd", self.subject_hunger_sd),
            ("taste_sd", self.taste_sd),
            ("wtp_noise_sd", self.wtp_noise_sd),
            ("buy_noise_sd", self.buy_noise_sd),
            ("rt_noise_sd", self.rt_noise_sd),
            ("wtp_bias", self.wtp_bias),
            ("gold_bonus", self.gold_bonus),
            ("silver_bonus", self.silver_bonus),
            ("rt_base_ms", self.rt_base_ms),
            ("rt_slope_ms_per_dollar", self.rt_slope_ms_per_dollar),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.choice_temperature > 0.0 && self.choice_temperature.is_finite()) {
            return bad("choice_temperature must be > 0");
        }
        if !self.wtp_drift_per_trial.is_finite() || !self.buy_drift_per_trial.is_finite() {
            return bad("drift parameters must be finite");
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let cfg: SimConfig = serde_json::from_reader(f)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The hidden per subject-item values, kept out of the cohort files.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub n_items: usize,
    /// Row-major `subject * n_items + item`, dollars.
    pub values: Vec<f64>,
}

impl LatentTruth {
    pub fn value(&self, subject: SubjectId, item: ItemId) -> f64 {
        self.values[subject.index() * self.n_items + item.index()]
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["subject_id", "item_id", "value_cents"])?;
        for (k, v) in self.values.iter().enumerate() {
            let s = k / self.n_items;
            let i = k % self.n_items;
            w.write_record([
                s.to_string(),
                i.to_string(),
                ((v * 100.0).round() as i64).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Lattice prices of one Buy-task support.
pub fn price_grid(support: PriceSource) -> Vec<Money> {
    match support.support() {
        None => Vec::new(),
        Some((lo, hi)) => (lo..=hi)
            .step_by(GRID_CENTS as usize)
            .map(|c| Money::from_cents(c).expect("lattice value"))
            .collect(),
    }
}

/// Logistic CDF of `x / scale`; a zero scale gives the step limit.
pub fn logistic_scaled(x: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        1.0 / (1.0 + (-x / scale).exp())
    } else if x > 0.0 {
        1.0
    } else if x < 0.0 {
        0.0
    } else {
        0.5
    }
}

struct SubjectDraw {
    subject: Subject,
    values: Vec<f64>,
    wtp: Vec<WtpRecord>,
    afc: Vec<AfcTrial>,
    buy: Vec<BuyTrial>,
}

fn normal(rng: &mut StreamRng, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sd
}

fn simulate_subject(cfg: &SimConfig, means: &[f64], s: u32) -> SubjectDraw {
    let j = cfg.n_items;
    let mut rng = substream(cfg.seed, &[tag::SIM, s as u64]);
    let sid = SubjectId(s);

    let hunger = normal(&mut rng, cfg.subject_hunger_sd);
    let gold = rng.random_range(0..j);
    let mut silver = rng.random_range(0..j - 1);
    if silver >= gold {
        silver += 1;
    }

    let values: Vec<f64> = (0..j)
        .map(|i| {
            let taste = normal(&mut rng, cfg.taste_sd);
            let mut v = (means[i] + hunger + taste).max(0.0);
            if i == gold {
                v += cfg.gold_bonus;
            } else if i == silver {
                v += cfg.silver_bonus;
            }
            v
        })
        .collect();

    // BDM task, items in random order.
    let mut order: Vec<usize> = (0..j).collect();
    order.shuffle(&mut rng);
    let mut wtp = vec![Money::ZERO; j];
    let mut wtp_trial = vec![0u32; j];
    for (t, &i) in order.iter().enumerate() {
        let trial = t as u32 + 1;
        let stated = values[i] - cfg.wtp_bias
            + normal(&mut rng, cfg.wtp_noise_sd)
            + cfg.wtp_drift_per_trial * trial as f64;
        wtp[i] = Money::round_dollars(stated, MAX_WTP_CENTS);
        wtp_trial[i] = trial;
    }
    let wtp_records = (0..j)
        .map(|i| WtpRecord {
            subject: sid,
            item: ItemId(i as u32),
            wtp: wtp[i],
            trial_index: wtp_trial[i],
        })
        .collect();

    // 2AFC task, every unordered pair once.
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(j * (j - 1) / 2);
    for a in 0..j {
        for b in (a + 1)..j {
            pairs.push((a, b));
        }
    }
    pairs.shuffle(&mut rng);
    let afc = pairs
        .iter()
        .enumerate()
        .map(|(t, &(a, b))| {
            let (left, right) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            let gap = values[left] - values[right];
            let p_left = logistic_scaled(gap, cfg.choice_temperature);
            let chosen = if rng.random::<f64>() < p_left { left } else { right };
            let rt = cfg.rt_base_ms + cfg.rt_slope_ms_per_dollar / gap.abs().max(0.05)
                + normal(&mut rng, cfg.rt_noise_sd);
            AfcTrial {
                subject: sid,
                left: ItemId(left as u32),
                right: ItemId(right as u32),
                chosen: ItemId(chosen as u32),
                rt_ms: rt.max(200.0).round() as u32,
                trial_index: t as u32 + 1,
            }
        })
        .collect();

    // Buy task: stated WTP plus one draw per support, all 4J trials shuffled.
    let low = price_grid(PriceSource::Low);
    let med = price_grid(PriceSource::Med);
    let high = price_grid(PriceSource::High);
    let mut trials: Vec<(usize, Money, PriceSource)> = Vec::with_capacity(4 * j);
    for i in 0..j {
        trials.push((i, wtp[i], PriceSource::Wtp));
        trials.push((i, low[rng.random_range(0..low.len())], PriceSource::Low));
        trials.push((i, med[rng.random_range(0..med.len())], PriceSource::Med));
        trials.push((i, high[rng.random_range(0..high.len())], PriceSource::High));
    }
    trials.shuffle(&mut rng);
    let buy = trials
        .iter()
        .enumerate()
        .map(|(t, &(i, price, source))| {
            let trial = t as u32 + 1;
            let v = values[i] + cfg.buy_drift_per_trial * trial as f64;
            let p = logistic_scaled(v - price.dollars(), cfg.buy_noise_sd);
            BuyTrial {
                subject: sid,
                item: ItemId(i as u32),
                price,
                bought: rng.random::<f64>() < p,
                price_source: source,
                trial_index: trial,
            }
        })
        .collect();

    SubjectDraw {
        subject: Subject {
            id: sid,
            gold_item: ItemId(gold as u32),
            silver_item: ItemId(silver as u32),
        },
        values,
        wtp: wtp_records,
        afc,
        buy,
    }
}

/// Generates a complete cohort and the latent values behind it.
pub fn simulate_cohort(cfg: &SimConfig) -> Result<(Cohort, LatentTruth)> {
    cfg.validate()?;
    let means = cfg.item_means();
    let draws: Vec<SubjectDraw> = (0..cfg.n_subjects as u32)
        .into_par_iter()
        .map(|s| simulate_subject(cfg, &means, s))
        .collect();

    let items = (0..cfg.n_items)
        .map(|j| {
            let (abbrev, name) = if cfg.n_items <= DEFAULT_ITEMS.len() {
                (DEFAULT_ITEMS[j].0.to_string(), DEFAULT_ITEMS[j].1.to_string())
            } else {
                (format!("I{}", j + 1), format!("Item {}", j + 1))
            };
            Item {
                id: ItemId(j as u32),
                abbrev,
                name,
            }
        })
        .collect();

    let mut cohort = Cohort {
        items,
        ..Cohort::default()
    };
    let mut values = Vec::with_capacity(cfg.n_subjects * cfg.n_items);
    for d in draws {
        cohort.subjects.push(d.subject);
        values.extend(d.values);
        cohort.wtp.extend(d.wtp);
        cohort.afc.extend(d.afc);
        cohort.buy.extend(d.buy);
    }
    Ok((
        cohort,
        LatentTruth {
            n_items: cfg.n_items,
            values,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_cohort;

    #[test]
    fn grids() {
        let cents = |s| price_grid(s).iter().map(|m| m.cents()).collect::<Vec<_>>();
        assert_eq!(cents(PriceSource::Low), vec![25, 50, 75, 100]);
        assert_eq!(cents(PriceSource::Med), vec![125, 150, 175, 200]);
        assert_eq!(price_grid(PriceSource::High).len(), 15);
        assert_eq!(cents(PriceSource::High)[14], 575);
    }

    #[test]
    fn default_cardinalities() {
        let (c, truth) = simulate_cohort(&SimConfig::with_seed(1)).unwrap();
        assert_eq!(c.buy.len(), 4400);
        assert_eq!(c.afc.len(), 10450);
        assert_eq!(c.wtp.len(), 1100);
        assert_eq!(truth.values.len(), 1100);
        assert!(validate_cohort(&c).is_empty());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = simulate_cohort(&SimConfig::with_seed(9)).unwrap();
        let b = simulate_cohort(&SimConfig::with_seed(9)).unwrap();
        let c = simulate_cohort(&SimConfig::with_seed(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SimConfig::default();
        cfg.choice_temperature = 0.0;
        assert!(simulate_cohort(&cfg).is_err());
        let mut cfg = SimConfig::default();
        cfg.taste_sd = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.n_items = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.item_mean_value = Some(vec![1.0; 3]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn noiseless_bias_makes_indifference_purchase_certain() {
        let cfg = SimConfig {
            seed: 3,
            subject_hunger_sd: 0.0,
            taste_sd: 0.0,
            wtp_noise_sd: 0.0,
            buy_noise_sd: 0.0,
            rt_noise_sd: 0.0,
            ..SimConfig::default()
        };
        let (c, _) = simulate_cohort(&cfg).unwrap();
        let at_wtp: Vec<_> = c.buy.iter().filter(|b| b.price_source == PriceSource::Wtp).collect();
        // Values within 12.5 cents of the rounded WTP + 25 cents bias: always buy,
        // except where the 5.75 cap is binding (still buys, v > cap).
        assert!(at_wtp.iter().all(|b| b.bought));
    }

    #[test]
    fn logistic_step_limit() {
        assert_eq!(logistic_scaled(0.1, 0.0), 1.0);
        assert_eq!(logistic_scaled(-0.1, 0.0), 0.0);
        assert_eq!(logistic_scaled(0.0, 0.0), 0.5);
        assert!((logistic_scaled(0.25, 0.5) - 0.622_459_3).abs() < 1e-6);
    }
}
