//! Data model for the three elicitation tasks and its CSV persistence.
//!
//! A [`Cohort`] holds one BDM willingness-to-pay record per subject-item
//! pair, one binary-choice (2AFC) trial per unordered item pair and subject,
//! and four posted-price Buy trials per subject-item pair.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing of every price and WTP value, in cents.
pub const GRID_CENTS: u32 = 25;
/// Upper end of the WTP elicitation scale, in cents.
pub const MAX_WTP_CENTS: u32 = 575;

/// A non-negative amount on the 25-cent lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Money(u32);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: u32) -> Result<Money> {
        if cents % GRID_CENTS != 0 {
            return Err(Error::Config(format!(
                "{cents} cents is not multiple of {GRID_CENTS}"
            )));
        }
        Ok(Money(cents))
    }

    /// Rounds a dollar amount to the nearest lattice point, clamped to `[0, max_cents]`.
    pub fn round_dollars(dollars: f64, max_cents: u32) -> Money {
        let steps = (dollars * 100.0 / GRID_CENTS as f64).round();
        let max_steps = (max_cents / GRID_CENTS) as f64;
        let steps = if steps.is_nan() { 0.0 } else { steps.clamp(0.0, max_steps) };
        Money(steps as u32 * GRID_CENTS)
    }

    pub fn cents(self) -> u32 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Signed difference `self - other` in cents.
    pub fn diff_cents(self, other: Money) -> i64 {
        self.0 as i64 - other.0 as i64
    }
}

impl TryFrom<u32> for Money {
    type Error = Error;
    fn try_from(value: u32) -> Result<Self> {
        Money::from_cents(value)
    }
}

impl From<Money> for u32 {
    fn from(m: Money) -> u32 {
        m.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl SubjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: ItemId,
    pub abbrev: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subject {
    pub id: SubjectId,
    pub gold_item: ItemId,
    pub silver_item: ItemId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WtpRecord {
    pub subject: SubjectId,
    pub item: ItemId,
    pub wtp: Money,
    pub trial_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AfcTrial {
    pub subject: SubjectId,
    pub left: ItemId,
    pub right: ItemId,
    pub chosen: ItemId,
    pub rt_ms: u32,
    pub trial_index: u32,
}

impl AfcTrial {
    pub fn other(&self) -> ItemId {
        if self.chosen == self.left {
            self.right
        } else {
            self.left
        }
    }
}

/// Where a Buy-task price came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PriceSource {
    Wtp,
    Low,
    Med,
    High,
}

impl PriceSource {
    /// Inclusive cent bounds for the randomly drawn supports.
    pub fn support(self) -> Option<(u32, u32)> {
        match self {
            PriceSource::Wtp => None,
            PriceSource::Low => Some((25, 100)),
            PriceSource::Med => Some((125, 200)),
            PriceSource::High => Some((225, 575)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuyTrial {
    pub subject: SubjectId,
    pub item: ItemId,
    pub price: Money,
    pub bought: bool,
    pub price_source: PriceSource,
    pub trial_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cohort {
    pub items: Vec<Item>,
    pub subjects: Vec<Subject>,
    pub wtp: Vec<WtpRecord>,
    pub afc: Vec<AfcTrial>,
    pub buy: Vec<BuyTrial>,
}

impl Cohort {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Dense `subject * n_items + item` table of stated WTP.
    ///
    /// Panics if a record references an id outside the cohort; call on
    /// validated cohorts only.
    pub fn wtp_table(&self) -> Vec<Money> {
        let j = self.n_items();
        let mut table = vec![Money::ZERO; self.n_subjects() * j];
        for r in &self.wtp {
            table[r.subject.index() * j + r.item.index()] = r.wtp;
        }
        table
    }

    /// Stated WTP for one Buy row, looked up through a [`Cohort::wtp_table`].
    pub fn wtp_for(&self, table: &[Money], subject: SubjectId, item: ItemId) -> Money {
        table[subject.index() * self.n_items() + item.index()]
    }
}

/// Checks every structural invariant; returns one message per violation.
pub fn validate_cohort(c: &Cohort) -> Vec<String> {
    let mut v = Vec::new();
    let n_items = c.n_items();
    let n_subjects = c.n_subjects();

    if n_items < 2 {
        v.push(format!("items: need at least 2 items, have {n_items}"));
    }
    for (k, it) in c.items.iter().enumerate() {
        if it.id.index() != k {
            v.push(format!("items row {}: item_id {} is not the dense index {k}", k + 1, it.id.0));
        }
    }
    let item_ok = |i: ItemId| i.index() < n_items;
    let subj_ok = |s: SubjectId| s.index() < n_subjects;

    for (k, s) in c.subjects.iter().enumerate() {
        if s.id.index() != k {
            v.push(format!("subjects row {}: subject_id {} is not the dense index {k}", k + 1, s.id.0));
        }
        if !item_ok(s.gold_item) || !item_ok(s.silver_item) {
            v.push(format!(
                "referential integrity: subject {} bonus items ({}, {}) reference unknown item_id",
                s.id.0, s.gold_item.0, s.silver_item.0
            ));
        }
        if s.gold_item == s.silver_item {
            v.push(format!("subject {}: gold_item equals silver_item ({})", s.id.0, s.gold_item.0));
        }
    }

    // WTP: one record per pair, on the scale, trial index within [1, J].
    let mut wtp_seen: HashMap<(u32, u32), Money> = HashMap::new();
    for (k, r) in c.wtp.iter().enumerate() {
        let row = k + 1;
        if !subj_ok(r.subject) || !item_ok(r.item) {
            v.push(format!(
                "referential integrity: wtp row {row} references unknown subject_id {} or item_id {}",
                r.subject.0, r.item.0
            ));
            continue;
        }
        if r.wtp.cents() % GRID_CENTS != 0 {
            v.push(format!("wtp row {row}: {} cents not multiple of 25", r.wtp.cents()));
        }
        if r.wtp.cents() > MAX_WTP_CENTS {
            v.push(format!("wtp row {row}: {} cents exceeds {MAX_WTP_CENTS}", r.wtp.cents()));
        }
        if r.trial_index < 1 || r.trial_index as usize > n_items {
            v.push(format!("wtp row {row}: trial_index {} outside [1, {n_items}]", r.trial_index));
        }
        if wtp_seen.insert((r.subject.0, r.item.0), r.wtp).is_some() {
            v.push(format!(
                "wtp: duplicate record for (subject {}, item {})",
                r.subject.0, r.item.0
            ));
        }
    }
    for s in 0..n_subjects as u32 {
        for i in 0..n_items as u32 {
            if !wtp_seen.contains_key(&(s, i)) {
                v.push(format!("wtp: missing record for (subject {s}, item {i})"));
            }
        }
    }

    // 2AFC: one trial per unordered pair per subject.
    let mut pair_count: HashMap<(u32, u32, u32), u32> = HashMap::new();
    for (k, t) in c.afc.iter().enumerate() {
        let row = k + 1;
        if !subj_ok(t.subject) || !item_ok(t.left) || !item_ok(t.right) || !item_ok(t.chosen) {
            v.push(format!("referential integrity: afc row {row} references unknown subject_id or item_id"));
            continue;
        }
        if t.left == t.right {
            v.push(format!("afc row {row}: self-pair (left = right = {})", t.left.0));
            continue;
        }
        if t.chosen != t.left && t.chosen != t.right {
            v.push(format!("afc row {row}: chosen item {} is neither left nor right", t.chosen.0));
        }
        if t.rt_ms == 0 {
            v.push(format!("afc row {row}: rt_ms must be positive"));
        }
        if t.trial_index < 1 {
            v.push(format!("afc row {row}: trial_index must be >= 1"));
        }
        let (a, b) = if t.left < t.right { (t.left.0, t.right.0) } else { (t.right.0, t.left.0) };
        *pair_count.entry((t.subject.0, a, b)).or_default() += 1;
    }
    for s in 0..n_subjects as u32 {
        for a in 0..n_items as u32 {
            for b in (a + 1)..n_items as u32 {
                match pair_count.get(&(s, a, b)).copied().unwrap_or(0) {
                    1 => {}
                    n => v.push(format!(
                        "afc: subject {s} has {n} trials for pair ({a}, {b}), expected 1"
                    )),
                }
            }
        }
    }

    // Buy: four trials per pair, exactly one at the stated WTP.
    let mut buy_count: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for (k, t) in c.buy.iter().enumerate() {
        let row = k + 1;
        if !subj_ok(t.subject) || !item_ok(t.item) {
            v.push(format!(
                "referential integrity: buy row {row} references unknown subject_id {} or item_id {}",
                t.subject.0, t.item.0
            ));
            continue;
        }
        if t.price.cents() % GRID_CENTS != 0 {
            v.push(format!("buy row {row}: {} cents not multiple of 25", t.price.cents()));
        }
        if t.trial_index < 1 {
            v.push(format!("buy row {row}: trial_index must be >= 1"));
        }
        let e = buy_count.entry((t.subject.0, t.item.0)).or_default();
        e.0 += 1;
        match t.price_source.support() {
            None => {
                e.1 += 1;
                if let Some(w) = wtp_seen.get(&(t.subject.0, t.item.0)) {
                    if *w != t.price {
                        v.push(format!(
                            "buy row {row}: WTP-sourced price {} differs from stated WTP {} for (subject {}, item {})",
                            t.price.cents(), w.cents(), t.subject.0, t.item.0
                        ));
                    }
                }
            }
            Some((lo, hi)) => {
                if t.price.cents() < lo || t.price.cents() > hi {
                    v.push(format!(
                        "buy row {row}: {:?} price {} outside [{lo}, {hi}]",
                        t.price_source, t.price.cents()
                    ));
                }
            }
        }
    }
    for s in 0..n_subjects as u32 {
        for i in 0..n_items as u32 {
            let (n, n_wtp) = buy_count.get(&(s, i)).copied().unwrap_or((0, 0));
            if n != 4 {
                v.push(format!("buy: (subject {s}, item {i}) has {n} trials, expected 4"));
            }
            if n_wtp != 1 {
                v.push(format!(
                    "buy: (subject {s}, item {i}) has {n_wtp} WTP-sourced trials, expected 1"
                ));
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// CSV persistence

pub const ITEMS_CSV: &str = "items.csv";
pub const SUBJECTS_CSV: &str = "subjects.csv";
pub const WTP_CSV: &str = "wtp.csv";
pub const AFC_CSV: &str = "afc.csv";
pub const BUY_CSV: &str = "buy.csv";
pub const COHORT_FILES: [&str; 5] = [ITEMS_CSV, SUBJECTS_CSV, WTP_CSV, AFC_CSV, BUY_CSV];

#[derive(Serialize, Deserialize)]
struct ItemRow {
    item_id: u32,
    abbrev: String,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct SubjectRow {
    subject_id: u32,
    gold_item: u32,
    silver_item: u32,
}

#[derive(Serialize, Deserialize)]
struct WtpRow {
    subject_id: u32,
    item_id: u32,
    wtp_cents: u32,
    trial_index: u32,
}

#[derive(Serialize, Deserialize)]
struct AfcRow {
    subject_id: u32,
    left_item: u32,
    right_item: u32,
    chosen_item: u32,
    rt_ms: u32,
    trial_index: u32,
}

#[derive(Serialize, Deserialize)]
struct BuyRow {
    subject_id: u32,
    item_id: u32,
    price_cents: u32,
    bought: u8,
    price_source: PriceSource,
    trial_index: u32,
}

fn read_rows<T, U>(dir: &Path, file: &str, mut convert: impl FnMut(T) -> std::result::Result<U, String>) -> Result<Vec<U>>
where
    T: for<'de> Deserialize<'de>,
{
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(f);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedRow {
                file: file.to_string(),
                line,
                message: e.to_string(),
            }
        })?;
        // Header is line 1, so the n-th record sits on line n + 1.
        let line = out.len() as u64 + 2;
        let v = convert(rec).map_err(|message| Error::MalformedRow {
            file: file.to_string(),
            line,
            message,
        })?;
        out.push(v);
    }
    Ok(out)
}

fn money(field: &str, cents: u32) -> std::result::Result<Money, String> {
    Money::from_cents(cents).map_err(|_| format!("{field}={cents} is not multiple of 25"))
}

/// Reads the five cohort CSVs from `dir` and validates the result.
pub fn load_cohort(dir: impl AsRef<Path>) -> Result<Cohort> {
    let dir = dir.as_ref();
    let items = read_rows(dir, ITEMS_CSV, |r: ItemRow| {
        Ok(Item {
            id: ItemId(r.item_id),
            abbrev: r.abbrev,
            name: r.name,
        })
    })?;
    let subjects = read_rows(dir, SUBJECTS_CSV, |r: SubjectRow| {
        Ok(Subject {
            id: SubjectId(r.subject_id),
            gold_item: ItemId(r.gold_item),
            silver_item: ItemId(r.silver_item),
        })
    })?;
    let wtp = read_rows(dir, WTP_CSV, |r: WtpRow| {
        Ok(WtpRecord {
            subject: SubjectId(r.subject_id),
            item: ItemId(r.item_id),
            wtp: money("wtp_cents", r.wtp_cents)?,
            trial_index: r.trial_index,
        })
    })?;
    let afc = read_rows(dir, AFC_CSV, |r: AfcRow| {
        Ok(AfcTrial {
            subject: SubjectId(r.subject_id),
            left: ItemId(r.left_item),
            right: ItemId(r.right_item),
            chosen: ItemId(r.chosen_item),
            rt_ms: r.rt_ms,
            trial_index: r.trial_index,
        })
    })?;
    let buy = read_rows(dir, BUY_CSV, |r: BuyRow| {
        let bought = match r.bought {
            0 => false,
            1 => true,
            b => return Err(format!("bought={b} must be 0 or 1")),
        };
        Ok(BuyTrial {
            subject: SubjectId(r.subject_id),
            item: ItemId(r.item_id),
            price: money("price_cents", r.price_cents)?,
            bought,
            price_source: r.price_source,
            trial_index: r.trial_index,
        })
    })?;
    let cohort = Cohort {
        items,
        subjects,
        wtp,
        afc,
        buy,
    };
    let violations = validate_cohort(&cohort);
    if violations.is_empty() {
        Ok(cohort)
    } else {
        Err(Error::Validation(violations))
    }
}

fn write_rows<T: Serialize>(dir: &Path, file: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let path = dir.join(file);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Writes the five cohort CSVs into `dir`, creating it if needed.
pub fn save_cohort(c: &Cohort, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(
        dir,
        ITEMS_CSV,
        c.items.iter().map(|i| ItemRow {
            item_id: i.id.0,
            abbrev: i.abbrev.clone(),
            name: i.name.clone(),
        }),
    )?;
    write_rows(
        dir,
        SUBJECTS_CSV,
        c.subjects.iter().map(|s| SubjectRow {
            subject_id: s.id.0,
            gold_item: s.gold_item.0,
            silver_item: s.silver_item.0,
        }),
    )?;
    write_rows(
        dir,
        WTP_CSV,
        c.wtp.iter().map(|r| WtpRow {
            subject_id: r.subject.0,
            item_id: r.item.0,
            wtp_cents: r.wtp.cents(),
            trial_index: r.trial_index,
        }),
    )?;
    write_rows(
        dir,
        AFC_CSV,
        c.afc.iter().map(|t| AfcRow {
            subject_id: t.subject.0,
            left_item: t.left.0,
            right_item: t.right.0,
            chosen_item: t.chosen.0,
            rt_ms: t.rt_ms,
            trial_index: t.trial_index,
        }),
    )?;
    write_rows(
        dir,
        BUY_CSV,
        c.buy.iter().map(|t| BuyRow {
            subject_id: t.subject.0,
            item_id: t.item.0,
            price_cents: t.price.cents(),
            bought: t.bought as u8,
            price_source: t.price_source,
            trial_index: t.trial_index,
        }),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn money_grid() {
        assert!(Money::from_cents(130).is_err());
        assert_eq!(Money::from_cents(575).unwrap().dollars(), 5.75);
        assert_eq!(Money::round_dollars(1.37, 575).cents(), 125);
        assert_eq!(Money::round_dollars(1.38, 575).cents(), 150);
        assert_eq!(Money::round_dollars(-3.0, 575).cents(), 0);
        assert_eq!(Money::round_dollars(9.0, 575).cents(), 575);
        assert_eq!(Money::from_cents(205).map_err(|e| e.to_string()).unwrap_err(), "invalid configuration: 205 cents is not multiple of 25");
        assert_eq!(Money::from_cents(225).unwrap().to_string(), "$2.25");
    }

    #[test]
    fn afc_other_side() {
        let t = AfcTrial {
            subject: SubjectId(0),
            left: ItemId(3),
            right: ItemId(5),
            chosen: ItemId(5),
            rt_ms: 900,
            trial_index: 1,
        };
        assert_eq!(t.other(), ItemId(3));
    }
}
