//! Train/evaluation splits under the four data-availability levels.
//!
//! Every split reserves 20% of each class (floored) for evaluation, then
//! draws the training set from what is left according to the availability
//! level: Limited takes a fixed 100 rows per class, the other levels take a
//! fraction of the capped class size (floored, at least 1). Static splits
//! sample uniformly per class from a seed; temporal splits take the earliest
//! rows for training and the latest for evaluation and use no randomness at
//! all. Open-world trials derive from an existing split by excluding one
//! malicious class from training while keeping its evaluation rows.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowstore::Dataset;
use crate::{seeding, Scalar};

/// Fraction of each class reserved for evaluation, all levels and regimes.
pub const EVAL_FRACTION: f64 = 0.2;

const SCARCE_DEFAULT_FRACTION: f64 = 0.15;
const MODERATE_FRACTION: f64 = 0.40;
const ABUNDANT_FRACTION: f64 = 0.80;
const LIMITED_PER_CLASS: u32 = 100;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("train fraction {0} outside (0, 0.8]")]
    BadFraction(f64),
    #[error("class {class} has {n} rows; splitting needs at least 2 per class")]
    ClassTooSmall { class: u32, n: u64 },
    #[error("temporal regime unsupported for this dataset: record {record} has no timestamp")]
    MissingTimestamps { record: usize },
    #[error("cannot exclude the benign class from training")]
    ExcludeBenign,
    #[error("cannot exclude class {class}: not a class of this split")]
    ExcludeAbsent { class: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvailabilityKind {
    Limited,
    Scarce,
    Moderate,
    Abundant,
}

/// Labeled-training-budget setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityLevel {
    pub kind: AvailabilityKind,
    /// Fraction of the capped class size drawn for training. Fixed for
    /// Moderate (0.40) and Abundant (0.80), configurable for Scarce
    /// (default 0.15), ignored by Limited (stored as 0).
    pub train_fraction: f64,
    pub limited_per_class: u32,
}

impl AvailabilityLevel {
    pub fn limited() -> AvailabilityLevel {
        AvailabilityLevel {
            kind: AvailabilityKind::Limited,
            train_fraction: 0.0,
            limited_per_class: LIMITED_PER_CLASS,
        }
    }

    pub fn scarce() -> AvailabilityLevel {
        AvailabilityLevel::scarce_with(SCARCE_DEFAULT_FRACTION).unwrap()
    }

    /// Scarce with a non-default fraction.
    pub fn scarce_with(fraction: f64) -> Result<AvailabilityLevel, SplitError> {
        if !(fraction > 0.0 && fraction <= 0.8) {
            return Err(SplitError::BadFraction(fraction));
        }
        Ok(AvailabilityLevel {
            kind: AvailabilityKind::Scarce,
            train_fraction: fraction,
            limited_per_class: LIMITED_PER_CLASS,
        })
    }

    pub fn moderate() -> AvailabilityLevel {
        AvailabilityLevel {
            kind: AvailabilityKind::Moderate,
            train_fraction: MODERATE_FRACTION,
            limited_per_class: LIMITED_PER_CLASS,
        }
    }

    pub fn abundant() -> AvailabilityLevel {
        AvailabilityLevel {
            kind: AvailabilityKind::Abundant,
            train_fraction: ABUNDANT_FRACTION,
            limited_per_class: LIMITED_PER_CLASS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            AvailabilityKind::Limited => "limited",
            AvailabilityKind::Scarce => "scarce",
            AvailabilityKind::Moderate => "moderate",
            AvailabilityKind::Abundant => "abundant",
        }
    }

    /// Nominal training rows for a class of `n` capped rows with `remaining`
    /// rows left after the evaluation holdout: `(wanted, taken)`.
    /// `taken < wanted` only happens for Limited on undersized classes.
    pub fn train_take(&self, n: u64, remaining: u64) -> (u64, u64) {
        let wanted = match self.kind {
            AvailabilityKind::Limited => self.limited_per_class as u64,
            // Fraction of the capped class size, not of the remainder; at
            // least one training row per class.
            _ => ((self.train_fraction * n as f64).floor() as u64).max(1),
        };
        (wanted, wanted.min(remaining))
    }
}

impl fmt::Display for AvailabilityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Static,
    Temporal,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Static => "static",
            Regime::Temporal => "temporal",
        })
    }
}

/// A class that could not supply the requested number of training rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub requested: u64,
    pub taken: u64,
}

/// Index sets for one trial. Indices point into the records of the dataset
/// the split was produced from; per-class lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub train_idx: BTreeMap<u32, Vec<usize>>,
    pub eval_idx: BTreeMap<u32, Vec<usize>>,
    /// Seed the static draw used; 0 for the deterministic temporal regime.
    pub seed: u64,
    pub availability: AvailabilityLevel,
    pub regime: Regime,
    /// Malicious class removed from training (open-world trials).
    pub excluded_class: Option<u32>,
    /// Classes that could not fill the Limited budget.
    pub shortfalls: BTreeMap<u32, Shortfall>,
    /// Temporal regime only: smallest over classes of
    /// `min t(E_c) − max t(T_c)`, the induced train/eval time gap.
    pub time_gap_seconds: Option<f64>,
}

impl TrialSplit {
    /// Stable content identity; equal splits hash equal. Not cryptographic.
    pub fn id(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("split serializes");
        seeding::content_hash(&bytes)
    }

    pub fn classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.eval_idx.keys().copied()
    }

    pub fn train_rows(&self, class: u32) -> &[usize] {
        self.train_idx.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn eval_rows(&self, class: u32) -> &[usize] {
        self.eval_idx.get(&class).map_or(&[], Vec::as_slice)
    }

    /// All training rows, concatenated in ascending class order.
    pub fn all_train_rows(&self) -> Vec<usize> {
        self.train_idx.values().flatten().copied().collect()
    }

    /// All evaluation rows, concatenated in ascending class order.
    pub fn all_eval_rows(&self) -> Vec<usize> {
        self.eval_idx.values().flatten().copied().collect()
    }

    pub fn train_total(&self) -> usize {
        self.train_idx.values().map(Vec::len).sum()
    }

    pub fn eval_total(&self) -> usize {
        self.eval_idx.values().map(Vec::len).sum()
    }
}

/// Classes declared in the spec but absent from this capture simply do not
/// participate; any class that is present needs at least 2 rows.
fn check_class_sizes<S: Scalar>(d: &Dataset<S>) -> Result<(), SplitError> {
    for (&class, &n) in &d.class_counts {
        if n == 1 {
            return Err(SplitError::ClassTooSmall { class, n });
        }
    }
    Ok(())
}

/// Uniform per-class draw: 20% evaluation holdout first, then the training
/// rows from the remainder. Deterministic in `seed`.
pub fn static_split<S: Scalar>(
    d: &Dataset<S>,
    a: AvailabilityLevel,
    seed: u64,
) -> Result<TrialSplit, SplitError> {
    check_class_sizes(d)?;
    let mut train_idx = BTreeMap::new();
    let mut eval_idx = BTreeMap::new();
    let mut shortfalls = BTreeMap::new();

    for (class, rows) in d.class_index_lists() {
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as u64;
        let e = (EVAL_FRACTION * n as f64).floor() as u64;
        let mut rng =
            ChaCha20Rng::seed_from_u64(seeding::derive_seed(seed, &["split", &class.to_string()]));

        // Draw E, then T from the complement, both kept in original order.
        let mut picked = rand::seq::index::sample(&mut rng, rows.len(), e as usize).into_vec();
        picked.sort_unstable();
        let eval: Vec<usize> = picked.iter().map(|&p| rows[p]).collect();

        let mut in_eval = vec![false; rows.len()];
        for &p in &picked {
            in_eval[p] = true;
        }
        let remainder: Vec<usize> =
            (0..rows.len()).filter(|&p| !in_eval[p]).map(|p| rows[p]).collect();

        let (wanted, take) = a.train_take(n, remainder.len() as u64);
        if take < wanted {
            shortfalls.insert(class, Shortfall { requested: wanted, taken: take });
        }
        let mut picked = rand::seq::index::sample(&mut rng, remainder.len(), take as usize)
            .into_vec();
        picked.sort_unstable();
        let train: Vec<usize> = picked.iter().map(|&p| remainder[p]).collect();

        eval_idx.insert(class, eval);
        train_idx.insert(class, train);
    }

    Ok(TrialSplit {
        train_idx,
        eval_idx,
        seed,
        availability: a,
        regime: Regime::Static,
        excluded_class: None,
        shortfalls,
        time_gap_seconds: None,
    })
}

/// Chronological per-class split: evaluation is the last 20% by timestamp,
/// training the earliest rows the availability level allows. Timestamp ties
/// are broken by original file order. No randomness; seed-independent.
pub fn temporal_split<S: Scalar>(
    d: &Dataset<S>,
    a: AvailabilityLevel,
) -> Result<TrialSplit, SplitError> {
    check_class_sizes(d)?;
    if let Some(record) = d.records.iter().position(|r| r.timestamp.is_none()) {
        return Err(SplitError::MissingTimestamps { record });
    }

    let mut train_idx = BTreeMap::new();
    let mut eval_idx = BTreeMap::new();
    let mut shortfalls = BTreeMap::new();
    let mut gap: Option<f64> = None;

    for (class, mut rows) in d.class_index_lists() {
        if rows.is_empty() {
            continue;
        }
        rows.sort_by(|&i, &j| {
            let (ti, tj) = (d.records[i].timestamp.unwrap(), d.records[j].timestamp.unwrap());
            ti.partial_cmp(&tj).unwrap().then(i.cmp(&j))
        });
        let n = rows.len() as u64;
        let e = (EVAL_FRACTION * n as f64).floor() as usize;
        let cut = rows.len() - e;

        let mut eval: Vec<usize> = rows[cut..].to_vec();
        let (wanted, take) = a.train_take(n, cut as u64);
        if take < wanted {
            shortfalls.insert(class, Shortfall { requested: wanted, taken: take });
        }
        let mut train: Vec<usize> = rows[..take as usize].to_vec();

        if let (Some(&last_t), Some(&first_e)) = (train.last(), eval.first()) {
            let g = d.records[first_e].timestamp.unwrap() - d.records[last_t].timestamp.unwrap();
            gap = Some(gap.map_or(g, |cur: f64| cur.min(g)));
        }
        train.sort_unstable();
        eval.sort_unstable();
        eval_idx.insert(class, eval);
        train_idx.insert(class, train);
    }

    Ok(TrialSplit {
        train_idx,
        eval_idx,
        seed: 0,
        availability: a,
        regime: Regime::Temporal,
        excluded_class: None,
        shortfalls,
        time_gap_seconds: gap,
    })
}

/// Open-world variant: drop a malicious class from training, keep its
/// evaluation rows (they become the unknown-attack test set).
pub fn exclude_class(s: &TrialSplit, class: u32) -> Result<TrialSplit, SplitError> {
    if class == 0 {
        return Err(SplitError::ExcludeBenign);
    }
    if !s.eval_idx.contains_key(&class) {
        return Err(SplitError::ExcludeAbsent { class });
    }
    let mut out = s.clone();
    out.train_idx.insert(class, Vec::new());
    out.excluded_class = Some(class);
    Ok(out)
}
