//! Feature groups and the eight feature spaces built from them.
//!
//! Every row corresponds to one Buy observation. Column layouts are fixed:
//! groups appear in the order Core, WTP, OtherWTP, 2AFC, RT and columns
//! within a group follow the listing order of the feature catalogue. Fixed
//! effects omit item 1 and subject 1; names use 1-based labels.

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BuyTrial, Cohort, ItemId, Money, SubjectId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    Core,
    Wtp,
    OtherWtp,
    Afc,
    Rt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSpace {
    C,
    W,
    WO,
    A,
    AR,
    WA,
    WOA,
    WOAR,
}

impl FeatureSpace {
    pub const ALL: [FeatureSpace; 8] = [
        FeatureSpace::C,
        FeatureSpace::W,
        FeatureSpace::WO,
        FeatureSpace::A,
        FeatureSpace::AR,
        FeatureSpace::WA,
        FeatureSpace::WOA,
        FeatureSpace::WOAR,
    ];

    pub fn groups(self) -> &'static [FeatureGroup] {
        use FeatureGroup::*;
        match self {
            FeatureSpace::C => &[Core],
            FeatureSpace::W => &[Core, Wtp],
            FeatureSpace::WO => &[Core, Wtp, OtherWtp],
            FeatureSpace::A => &[Core, Afc],
            FeatureSpace::AR => &[Core, Afc, Rt],
            FeatureSpace::WA => &[Core, Wtp, Afc],
            FeatureSpace::WOA => &[Core, Wtp, OtherWtp, Afc],
            FeatureSpace::WOAR => &[Core, Wtp, OtherWtp, Afc, Rt],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSpace::C => "C",
            FeatureSpace::W => "W",
            FeatureSpace::WO => "WO",
            FeatureSpace::A => "A",
            FeatureSpace::AR => "AR",
            FeatureSpace::WA => "WA",
            FeatureSpace::WOA => "WOA",
            FeatureSpace::WOAR => "WOAR",
        }
    }
}

impl fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureSpace::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown feature space {s:?}")))
    }
}

/// Identifies the Buy observation a feature row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowMeta {
    pub subject: SubjectId,
    pub item: ItemId,
    pub price: Money,
    pub wtp: Money,
    pub trial_index: u32,
}

impl RowMeta {
    /// Stated WTP minus price, in cents.
    pub fn surplus_cents(&self) -> i64 {
        self.wtp.diff_cents(self.price)
    }
}

/// Dense named-column matrix, one row per Buy observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    /// Row-major values.
    pub data: Vec<f64>,
    pub outcome: Vec<bool>,
    pub meta: Vec<RowMeta>,
    pub n_subjects: usize,
    pub n_items: usize,
    /// Columns flagged as item indicators or interactions with one.
    pub item_indexed: Vec<bool>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// A view over every row.
    pub fn all(&self) -> Rows<'_> {
        Rows {
            x: self,
            idx: (0..self.n_rows()).collect(),
        }
    }

    /// A view over the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Rows<'_> {
        Rows {
            x: self,
            idx: idx.to_vec(),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::ModelSpaceMismatch(format!("column {n} not present")))
            })
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.n_rows() * idx.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(FeatureMatrix {
            column_names: names.to_vec(),
            data,
            outcome: self.outcome.clone(),
            meta: self.meta.clone(),
            n_subjects: self.n_subjects,
            n_items: self.n_items,
            item_indexed: idx.iter().map(|&j| self.item_indexed[j]).collect(),
        })
    }

    /// Writes `subject_id,item_id,price_cents,bought` followed by every column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        let mut header = vec![
            "subject_id".to_string(),
            "item_id".to_string(),
            "price_cents".to_string(),
            "bought".to_string(),
        ];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for r in 0..self.n_rows() {
            rec.clear();
            let m = &self.meta[r];
            rec.push(m.subject.0.to_string());
            rec.push(m.item.0.to_string());
            rec.push(m.price.cents().to_string());
            rec.push((self.outcome[r] as u8).to_string());
            rec.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// A row subset of a [`FeatureMatrix`]; learners fit and predict on these.
#[derive(Debug, Clone)]
pub struct Rows<'a> {
    pub x: &'a FeatureMatrix,
    pub idx: Vec<usize>,
}

impl<'a> Rows<'a> {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn row(&self, k: usize) -> &'a [f64] {
        self.x.row(self.idx[k])
    }

    pub fn outcome(&self, k: usize) -> bool {
        self.x.outcome[self.idx[k]]
    }

    pub fn meta(&self, k: usize) -> &'a RowMeta {
        &self.x.meta[self.idx[k]]
    }

    pub fn outcomes_f64(&self) -> Vec<f64> {
        self.idx.iter().map(|&i| self.x.outcome[i] as u8 as f64).collect()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.idx.iter().map(|&i| self.x.outcome[i]).collect()
    }
}

// ---------------------------------------------------------------------------
// Per-subject summaries of the WTP and 2AFC tasks.

#[derive(Debug, Clone)]
struct SubjectProfile {
    wtp: Vec<f64>,
    /// `choice[j * J + k]` = 1 when item j was chosen over item k.
    choice: Vec<f64>,
    /// Response time of the j-vs-k trial in seconds, 0 on the diagonal.
    rt: Vec<f64>,
    fraction: Vec<f64>,
    rank: Vec<f64>,
    std_fraction: f64,
    mean_rt: f64,
    sd_rt: f64,
    max_rt: f64,
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Ranks by fraction, 1 = most chosen, ties by item id ascending.
fn ranks(fraction: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..fraction.len()).collect();
    order.sort_by(|&a, &b| fraction[b].total_cmp(&fraction[a]).then(a.cmp(&b)));
    let mut rank = vec![0.0; fraction.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = (r + 1) as f64;
    }
    rank
}

/// Precomputed task summaries for building feature rows at any price.
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    n_subjects: usize,
    n_items: usize,
    profiles: Vec<SubjectProfile>,
    wtp_table: Vec<Money>,
}

/// Receives columns in layout order. The same walk produces names and values.
trait Sink {
    fn push(&mut self, item_indexed: bool, name: impl FnOnce() -> String, value: f64);
}

struct NameSink {
    drop_item_fe: bool,
    names: Vec<String>,
    flags: Vec<bool>,
}

impl Sink for NameSink {
    fn push(&mut self, item_indexed: bool, name: impl FnOnce() -> String, _value: f64) {
        if !(self.drop_item_fe && item_indexed) {
            self.names.push(name());
            self.flags.push(item_indexed);
        }
    }
}

struct ValueSink<'a> {
    drop_item_fe: bool,
    out: &'a mut [f64],
    pos: usize,
}

impl Sink for ValueSink<'_> {
    #[inline]
    fn push(&mut self, item_indexed: bool, _name: impl FnOnce() -> String, value: f64) {
        if !(self.drop_item_fe && item_indexed) {
            self.out[self.pos] = value;
            self.pos += 1;
        }
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl FeatureBuilder {
    /// Summarizes the cohort. The cohort must be valid.
    pub fn new(c: &Cohort) -> FeatureBuilder {
        let s_n = c.n_subjects();
        let j_n = c.n_items();
        let wtp_table = c.wtp_table();
        let mut choice = vec![vec![0.0; j_n * j_n]; s_n];
        let mut rt = vec![vec![0.0; j_n * j_n]; s_n];
        let mut rts: Vec<Vec<f64>> = vec![Vec::new(); s_n];
        for t in &c.afc {
            let s = t.subject.index();
            let w = t.chosen.index();
            let l = t.other().index();
            choice[s][w * j_n + l] = 1.0;
            let secs = t.rt_ms as f64 / 1000.0;
            rt[s][w * j_n + l] = secs;
            rt[s][l * j_n + w] = secs;
            rts[s].push(secs);
        }
        let profiles = (0..s_n)
            .map(|s| {
                let wtp = (0..j_n).map(|j| wtp_table[s * j_n + j].dollars()).collect();
                let fraction: Vec<f64> = (0..j_n)
                    .map(|j| choice[s][j * j_n..(j + 1) * j_n].iter().sum::<f64>() / (j_n - 1) as f64)
                    .collect();
                let rank = ranks(&fraction);
                let std_fraction = sample_sd(&fraction);
                let n_rt = rts[s].len().max(1) as f64;
                let mean_rt = rts[s].iter().sum::<f64>() / n_rt;
                let sd_rt = sample_sd(&rts[s]);
                let max_rt = rts[s].iter().cloned().fold(0.0, f64::max);
                SubjectProfile {
                    wtp,
                    choice: std::mem::take(&mut choice[s]),
                    rt: std::mem::take(&mut rt[s]),
                    fraction,
                    rank,
                    std_fraction,
                    mean_rt,
                    sd_rt,
                    max_rt,
                }
            })
            .collect();
        FeatureBuilder {
            n_subjects: s_n,
            n_items: j_n,
            profiles,
            wtp_table,
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn wtp(&self, subject: SubjectId, item: ItemId) -> Money {
        self.wtp_table[subject.index() * self.n_items + item.index()]
    }

    fn walk<S: Sink>(&self, groups: &[FeatureGroup], s: usize, j: usize, price: f64, sink: &mut S) {
        for g in groups {
            match g {
                FeatureGroup::Core => self.core(s, j, price, sink),
                FeatureGroup::Wtp => self.wtp_group(s, j, sink),
                FeatureGroup::OtherWtp => self.other_wtp(s, j, sink),
                FeatureGroup::Afc => self.afc(s, j, sink),
                FeatureGroup::Rt => self.rt(s, j, sink),
            }
        }
    }

    fn core<S: Sink>(&self, s: usize, j: usize, p: f64, sink: &mut S) {
        sink.push(false, || "price".into(), p);
        sink.push(false, || "price_sq".into(), p * p);
        sink.push(false, || "price_cu".into(), p * p * p);
        for k in 1..self.n_items {
            sink.push(true, || format!("item_{}", k + 1), ind(j == k));
        }
        for k in 1..self.n_subjects {
            sink.push(false, || format!("subject_{}", k + 1), ind(s == k));
        }
        for k in 1..self.n_items {
            sink.push(true, || format!("price_x_item_{}", k + 1), p * ind(j == k));
        }
        for k in 1..self.n_subjects {
            sink.push(false, || format!("price_x_subject_{}", k + 1), p * ind(s == k));
        }
    }

    fn wtp_group<S: Sink>(&self, s: usize, j: usize, sink: &mut S) {
        let w = self.profiles[s].wtp[j];
        sink.push(false, || "wtp".into(), w);
        sink.push(false, || "wtp_sq".into(), w * w);
        sink.push(false, || "wtp_cu".into(), w * w * w);
        for k in 1..self.n_items {
            sink.push(true, || format!("wtp_x_item_{}", k + 1), w * ind(j == k));
        }
        for k in 1..self.n_subjects {
            sink.push(false, || format!("wtp_x_subject_{}", k + 1), w * ind(s == k));
        }
    }

    fn other_wtp<S: Sink>(&self, s: usize, j: usize, sink: &mut S) {
        let prof = &self.profiles[s];
        for l in 0..self.n_items {
            sink.push(false, || format!("wtp_item_{}", l + 1), prof.wtp[l]);
        }
        for l in 0..self.n_items {
            for k in 1..self.n_items {
                sink.push(
                    true,
                    || format!("wtp_item_{}_x_item_{}", l + 1, k + 1),
                    prof.wtp[l] * ind(j == k),
                );
            }
        }
    }

    fn afc<S: Sink>(&self, s: usize, j: usize, sink: &mut S) {
        let prof = &self.profiles[s];
        let jn = self.n_items;
        for k in 0..jn {
            sink.push(false, || format!("choice_over_{}", k + 1), prof.choice[j * jn + k]);
        }
        for k in 0..jn {
            sink.push(false, || format!("fraction_{}", k + 1), prof.fraction[k]);
        }
        let f = prof.fraction[j];
        sink.push(false, || "fraction_own".into(), f);
        for k in 1..jn {
            sink.push(true, || format!("fraction_own_x_item_{}", k + 1), f * ind(j == k));
        }
        for k in 1..self.n_subjects {
            sink.push(false, || format!("fraction_own_x_subject_{}", k + 1), f * ind(s == k));
        }
        let sf = prof.std_fraction;
        sink.push(false, || "std_fraction".into(), sf);
        sink.push(false, || "std_fraction_sq".into(), sf * sf);
        sink.push(false, || "std_fraction_cu".into(), sf * sf * sf);
        for k in 0..jn {
            sink.push(false, || format!("rank_{}", k + 1), prof.rank[k]);
        }
        let r = prof.rank[j];
        sink.push(false, || "rank_own".into(), r);
        for k in 1..jn {
            sink.push(true, || format!("rank_own_x_item_{}", k + 1), r * ind(j == k));
        }
        for k in 1..self.n_subjects {
            sink.push(false, || format!("rank_own_x_subject_{}", k + 1), r * ind(s == k));
        }
    }

    fn rt<S: Sink>(&self, s: usize, j: usize, sink: &mut S) {
        let prof = &self.profiles[s];
        let jn = self.n_items;
        let rt = &prof.rt[j * jn..(j + 1) * jn];
        let ch = &prof.choice[j * jn..(j + 1) * jn];
        for k in 0..jn {
            sink.push(false, || format!("rt_{}", k + 1), rt[k]);
        }
        for k in 0..jn {
            sink.push(false, || format!("rt_sq_{}", k + 1), rt[k] * rt[k]);
        }
        for k in 0..jn {
            sink.push(false, || format!("rt_x_choice_{}", k + 1), rt[k] * ch[k]);
        }
        for k in 0..jn {
            sink.push(false, || format!("rt_sq_x_choice_{}", k + 1), rt[k] * rt[k] * ch[k]);
        }
        let (m, sd) = (prof.mean_rt, prof.sd_rt);
        sink.push(false, || "mean_rt".into(), m);
        sink.push(false, || "mean_rt_sq".into(), m * m);
        sink.push(false, || "mean_rt_cu".into(), m * m * m);
        sink.push(false, || "sd_rt".into(), sd);
        sink.push(false, || "sd_rt_sq".into(), sd * sd);
        sink.push(false, || "sd_rt_cu".into(), sd * sd * sd);
        let max = prof.max_rt;
        let speed: f64 = if max > 0.0 {
            (0..jn)
                .filter(|&k| k != j)
                .map(|k| (max - rt[k]) / max * (2.0 * ch[k] - 1.0))
                .sum()
        } else {
            0.0
        };
        sink.push(false, || "rt_signed_speed".into(), speed);
    }

    /// Column names and item-indexed flags of a group list.
    pub fn columns(&self, groups: &[FeatureGroup], drop_item_fe: bool) -> (Vec<String>, Vec<bool>) {
        let mut sink = NameSink {
            drop_item_fe,
            names: Vec::new(),
            flags: Vec::new(),
        };
        self.walk(groups, 0, 0, 0.0, &mut sink);
        (sink.names, sink.flags)
    }

    fn build(
        &self,
        groups: &[FeatureGroup],
        drop_item_fe: bool,
        rows: &[(RowMeta, bool)],
    ) -> FeatureMatrix {
        let (names, flags) = self.columns(groups, drop_item_fe);
        let p = names.len();
        let mut data = vec![0.0; rows.len() * p];
        if p > 0 {
            data.par_chunks_mut(p).zip(rows.par_iter()).for_each(|(out, (m, _))| {
                let mut sink = ValueSink {
                    drop_item_fe,
                    out,
                    pos: 0,
                };
                self.walk(groups, m.subject.index(), m.item.index(), m.price.dollars(), &mut sink);
                debug_assert_eq!(sink.pos, p);
            });
        }
        FeatureMatrix {
            column_names: names,
            data,
            outcome: rows.iter().map(|r| r.1).collect(),
            meta: rows.iter().map(|r| r.0).collect(),
            n_subjects: self.n_subjects,
            n_items: self.n_items,
            item_indexed: flags,
        }
    }

    fn meta_of(&self, b: &BuyTrial) -> RowMeta {
        RowMeta {
            subject: b.subject,
            item: b.item,
            price: b.price,
            wtp: self.wtp(b.subject, b.item),
            trial_index: b.trial_index,
        }
    }

    /// Builds the given groups for every Buy trial of `c`, in file order.
    pub fn groups_for_cohort(&self, c: &Cohort, groups: &[FeatureGroup], drop_item_fe: bool) -> FeatureMatrix {
        let rows: Vec<(RowMeta, bool)> = c.buy.iter().map(|b| (self.meta_of(b), b.bought)).collect();
        self.build(groups, drop_item_fe, &rows)
    }

    /// Feature rows for one subject-item pair at arbitrary prices; outcomes are `false`.
    pub fn rows_at_prices(
        &self,
        subject: SubjectId,
        item: ItemId,
        prices: &[Money],
        space: FeatureSpace,
        drop_item_fe: bool,
    ) -> FeatureMatrix {
        let wtp = self.wtp(subject, item);
        let rows: Vec<(RowMeta, bool)> = prices
            .iter()
            .map(|&price| {
                (
                    RowMeta {
                        subject,
                        item,
                        price,
                        wtp,
                        trial_index: 0,
                    },
                    false,
                )
            })
            .collect();
        self.build(space.groups(), drop_item_fe, &rows)
    }

    /// Meta-only matrix (zero columns) for arbitrary rows.
    pub fn meta_rows(&self, rows: &[(RowMeta, bool)]) -> FeatureMatrix {
        self.build(&[], false, rows)
    }
}

/// Assembles a feature space for every Buy trial of the cohort.
pub fn assemble_space(c: &Cohort, space: FeatureSpace, drop_item_fixed_effects: bool) -> FeatureMatrix {
    FeatureBuilder::new(c).groups_for_cohort(c, space.groups(), drop_item_fixed_effects)
}

pub fn build_core(c: &Cohort) -> FeatureMatrix {
    FeatureBuilder::new(c).groups_for_cohort(c, &[FeatureGroup::Core], false)
}

pub fn build_wtp(c: &Cohort) -> FeatureMatrix {
    FeatureBuilder::new(c).groups_for_cohort(c, &[FeatureGroup::Wtp], false)
}

pub fn build_otherwtp(c: &Cohort) -> FeatureMatrix {
    FeatureBuilder::new(c).groups_for_cohort(c, &[FeatureGroup::OtherWtp], false)
}

pub fn build_afc(c: &Cohort) -> FeatureMatrix {
    FeatureBuilder::new(c).groups_for_cohort(c, &[FeatureGroup::Afc], false)
}

pub fn build_rt(c: &Cohort) -> FeatureMatrix {
    FeatureBuilder::new(c).groups_for_cohort(c, &[FeatureGroup::Rt], false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_ties_by_item_id() {
        assert_eq!(ranks(&[0.5, 1.0, 0.5, 0.0]), vec![2.0, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn parse_space() {
        assert_eq!("woa".parse::<FeatureSpace>().unwrap(), FeatureSpace::WOA);
        assert!("X".parse::<FeatureSpace>().is_err());
    }

    #[test]
    fn sd_of_constant_is_zero() {
        assert_eq!(sample_sd(&[2.0, 2.0, 2.0]), 0.0);
        assert!((sample_sd(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
