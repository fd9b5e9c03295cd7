//! Holdout protocols over the Buy rows of a cohort.
//!
//! Row indices refer to positions in `Cohort::buy`, which is also the row
//! order of every assembled feature matrix.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::domain::Cohort;
use crate::error::{Error, Result};
use crate::rng::{substream, tag, StreamRng};

const N_QUINTILES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    WithinBetween,
    BetweenSubject,
    BetweenItem,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::WithinBetween, Protocol::BetweenSubject, Protocol::BetweenItem];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::WithinBetween => "within_between",
            Protocol::BetweenSubject => "between_subject",
            Protocol::BetweenItem => "between_item",
        }
    }

    /// Holdout size in the protocol's unit: rows, subjects or items.
    pub fn default_holdout(self) -> usize {
        match self {
            Protocol::WithinBetween => 440,
            Protocol::BetweenSubject => 5,
            Protocol::BetweenItem => 2,
        }
    }

    /// Item-indexed columns are left out of every feature matrix.
    pub fn drops_item_effects(self) -> bool {
        self == Protocol::BetweenItem
    }

    fn id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown protocol '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub protocol: Protocol,
    /// Rows for `WithinBetween`, subjects or items for the between protocols.
    pub holdout_size: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(protocol: Protocol, seed: u64) -> SplitSpec {
        SplitSpec {
            protocol,
            holdout_size: protocol.default_holdout(),
            n_repeats: 50,
            seed,
        }
    }

    pub fn with_repeats(mut self, n_repeats: usize) -> SplitSpec {
        self.n_repeats = n_repeats;
        self
    }

    /// Train/test rows of one repeat.
    pub fn split(&self, c: &Cohort, repeat: usize) -> Result<Split> {
        if self.n_repeats == 0 {
            return Err(Error::Split("n_repeats must be >= 1".into()));
        }
        let mut rng = substream(self.seed, &[tag::SPLIT, self.protocol.id(), repeat as u64]);
        match self.protocol {
            Protocol::WithinBetween => stratified_holdout_with(c, self.holdout_size, &mut rng),
            Protocol::BetweenSubject => between_subject_with(c, self.holdout_size, &mut rng),
            Protocol::BetweenItem => between_item_with(c, self.holdout_size, &mut rng),
        }
    }
}

/// Disjoint, ascending row positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    fn from_test(n: usize, mut test: Vec<usize>) -> Split {
        test.sort_unstable();
        let mut in_test = vec![false; n];
        test.iter().for_each(|&i| in_test[i] = true);
        Split {
            train: (0..n).filter(|&i| !in_test[i]).collect(),
            test,
        }
    }
}

/// Subjects sorted by purchase frequency over all their Buy rows (ties by
/// id), cut into five near-equal bins; `holdout / 5` rows are drawn from each.
pub fn stratified_holdout_split(c: &Cohort, holdout: usize, seed: u64) -> Result<Split> {
    stratified_holdout_with(c, holdout, &mut substream(seed, &[tag::SPLIT]))
}

fn stratified_holdout_with(c: &Cohort, holdout: usize, rng: &mut StreamRng) -> Result<Split> {
    let n = c.buy.len();
    if holdout == 0 || holdout % N_QUINTILES != 0 {
        return Err(Error::Split(format!("holdout {holdout} is not a positive multiple of 5")));
    }
    if holdout >= n {
        return Err(Error::Split(format!("holdout {holdout} is not smaller than {n} rows")));
    }
    let ns = c.n_subjects();
    if ns < N_QUINTILES {
        return Err(Error::Split(format!("{ns} subjects cannot fill 5 quintiles")));
    }
    let (mut bought, mut total) = (vec![0usize; ns], vec![0usize; ns]);
    for b in &c.buy {
        total[b.subject.index()] += 1;
        bought[b.subject.index()] += b.bought as usize;
    }
    let freq = |s: usize| if total[s] == 0 { 0.0 } else { bought[s] as f64 / total[s] as f64 };
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| freq(a).total_cmp(&freq(b)).then(a.cmp(&b)));
    let mut bin_of = vec![0usize; ns];
    for (rank, &s) in order.iter().enumerate() {
        bin_of[s] = rank * N_QUINTILES / ns;
    }
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); N_QUINTILES];
    for (i, b) in c.buy.iter().enumerate() {
        bins[bin_of[b.subject.index()]].push(i);
    }
    let per_bin = holdout / N_QUINTILES;
    let mut test = Vec::with_capacity(holdout);
    for (k, rows) in bins.iter().enumerate() {
        if rows.len() < per_bin {
            return Err(Error::Split(format!(
                "quintile {} has {} rows, fewer than {per_bin}",
                k + 1,
                rows.len()
            )));
        }
        test.extend(rows.choose_multiple(rng, per_bin).copied());
    }
    Ok(Split::from_test(n, test))
}

/// All rows of `n_test` randomly chosen subjects are held out.
pub fn between_subject_split(c: &Cohort, n_test: usize, seed: u64) -> Result<Split> {
    between_subject_with(c, n_test, &mut substream(seed, &[tag::SPLIT]))
}

fn between_subject_with(c: &Cohort, n_test: usize, rng: &mut StreamRng) -> Result<Split> {
    let ns = c.n_subjects();
    if ns < 6 || n_test == 0 || n_test >= ns {
        return Err(Error::Split(format!("cannot hold out {n_test} of {ns} subjects")));
    }
    let mut held = vec![false; ns];
    let ids: Vec<usize> = (0..ns).collect();
    ids.choose_multiple(rng, n_test).for_each(|&s| held[s] = true);
    let test = (0..c.buy.len()).filter(|&i| held[c.buy[i].subject.index()]).collect();
    Ok(Split::from_test(c.buy.len(), test))
}

/// All rows of `n_test` randomly chosen items are held out.
pub fn between_item_split(c: &Cohort, n_test: usize, seed: u64) -> Result<Split> {
    between_item_with(c, n_test, &mut substream(seed, &[tag::SPLIT]))
}

fn between_item_with(c: &Cohort, n_test: usize, rng: &mut StreamRng) -> Result<Split> {
    let nj = c.n_items();
    if nj < 3 || n_test == 0 || n_test >= nj {
        return Err(Error::Split(format!("cannot hold out {n_test} of {nj} items")));
    }
    let mut held = vec![false; nj];
    let ids: Vec<usize> = (0..nj).collect();
    ids.choose_multiple(rng, n_test).for_each(|&j| held[j] = true);
    let test = (0..c.buy.len()).filter(|&i| held[c.buy[i].item.index()]).collect();
    Ok(Split::from_test(c.buy.len(), test))
}
