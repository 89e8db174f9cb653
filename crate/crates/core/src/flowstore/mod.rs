//! Labeled NetFlow storage.
//!
//! A [`DatasetSpec`] describes the CSV schema of one merged dataset;
//! [`load_dataset`] parses the file into an immutable [`Dataset`] of
//! [`FlowRecord`]s; [`Dataset::apply_caps`] down-samples oversized classes;
//! [`project`] produces the numeric [`FeatureView`] a learner consumes, with
//! ports encoded into IANA categories and IP columns never present.

pub mod expr;
mod load;
mod spec;
mod view;

pub use expr::{BaseVar, Expr, ExprError};
pub use load::{load_dataset, LoadError};
pub use spec::{
    BaseColumns, Caps, Cidr, DatasetSpec, DerivedRule, FeatureLists, FeatureSet, SpecError,
};
pub use view::{encode_port, project, project_records, FeatureView, ViewError};

#[cfg(test)]
pub(crate) use spec::tests::TOY_SPEC;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::seeding;
use crate::Scalar;

/// The physically grounded fields an adversary can act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseFields {
    /// Seconds.
    pub duration: f64,
    pub tot_bytes: u64,
    pub tot_packets: u64,
}

impl BaseFields {
    pub const ZERO: BaseFields = BaseFields { duration: 0.0, tot_bytes: 0, tot_packets: 0 };
}

/// One labeled NetFlow sample.
///
/// `features` is dense and ordered by the spec's complete feature list; the
/// names live once in the spec rather than per record. IP addresses are
/// consumed at load time (to compute `src_internal`) and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")] // S: Scalar already carries Serialize + DeserializeOwned
pub struct FlowRecord<S: Scalar> {
    pub features: Vec<S>,
    /// 0 is benign; any other id is an attack family from the class table.
    pub class_id: u32,
    /// Seconds since epoch.
    pub timestamp: Option<f64>,
    /// IANA protocol number (17 = UDP), when the dataset exposes one.
    pub protocol: Option<u16>,
    pub src_internal: bool,
    pub base: BaseFields,
}

/// An immutable, loaded dataset. Construction recomputes `class_counts` and
/// `chronologically_sorted`, so they are always consistent with `records`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<S: Scalar> {
    pub spec: DatasetSpec,
    pub records: Vec<FlowRecord<S>>,
    pub class_counts: BTreeMap<u32, u64>,
    /// True when every record has a timestamp and file order is already
    /// non-decreasing in time.
    pub chronologically_sorted: bool,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(spec: DatasetSpec, records: Vec<FlowRecord<S>>) -> Dataset<S> {
        let mut class_counts: BTreeMap<u32, u64> =
            spec.class_table.keys().map(|&id| (id, 0)).collect();
        for r in &records {
            debug_assert!(
                spec.class_table.contains_key(&r.class_id),
                "record class {} missing from class table",
                r.class_id
            );
            *class_counts.entry(r.class_id).or_insert(0) += 1;
        }
        let chronologically_sorted = !records.is_empty()
            && records.iter().all(|r| r.timestamp.is_some())
            && records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp);
        Dataset { spec, records, class_counts, chronologically_sorted }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices of every class, ascending within each class.
    pub fn class_index_lists(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> =
            self.spec.class_table.keys().map(|&id| (id, Vec::new())).collect();
        for (i, r) in self.records.iter().enumerate() {
            map.entry(r.class_id).or_default().push(i);
        }
        map
    }

    /// Down-sample oversized classes to the spec caps.
    ///
    /// Sampling is uniform without replacement, per class, seeded by
    /// `(seed, class id)`, and preserves original record order. Classes at or
    /// under their cap are untouched, which also makes the operation
    /// idempotent.
    pub fn apply_caps(self, seed: u64) -> Dataset<S> {
        let caps = self.spec.caps;
        let mut keep = vec![true; self.records.len()];
        let mut any_dropped = false;
        for (&class, indices) in &self.class_index_lists() {
            let cap = if class == 0 { caps.benign } else { caps.per_class_malicious } as usize;
            if indices.len() <= cap {
                continue;
            }
            any_dropped = true;
            let mut rng = ChaCha20Rng::seed_from_u64(seeding::split_seed(seed, class as u64));
            let chosen = rand::seq::index::sample(&mut rng, indices.len(), cap);
            for idx in indices {
                keep[*idx] = false;
            }
            for pos in chosen.iter() {
                keep[indices[pos]] = true;
            }
        }
        if !any_dropped {
            return self;
        }
        let mut records = self.records;
        let mut it = keep.iter();
        records.retain(|_| *it.next().unwrap());
        Dataset::new(self.spec, records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_spec() -> DatasetSpec {
        DatasetSpec::from_toml(spec::tests::TOY_SPEC).unwrap()
    }

    pub(crate) fn record(class_id: u32, ts: f64, features: Vec<f64>) -> FlowRecord<f64> {
        FlowRecord {
            features,
            class_id,
            timestamp: Some(ts),
            protocol: Some(6),
            src_internal: true,
            base: BaseFields { duration: 1.0, tot_bytes: 100, tot_packets: 10 },
        }
    }

    fn flat(class_id: u32, ts: f64) -> FlowRecord<f64> {
        record(class_id, ts, vec![1.0, 100.0, 10.0, 100.0, 80.0, 443.0])
    }

    fn small_caps_spec(benign: u64, malicious: u64) -> DatasetSpec {
        let mut s = toy_spec();
        s.caps = Caps { benign, per_class_malicious: malicious };
        s
    }

    #[test]
    fn counts_follow_records_and_sum_matches() {
        let recs: Vec<_> =
            (0..6).map(|i| flat(0, i as f64)).chain((0..4).map(|i| flat(1, 10.0 + i as f64))).collect();
        let d = Dataset::new(toy_spec(), recs);
        assert_eq!(d.class_counts[&0], 6);
        assert_eq!(d.class_counts[&1], 4);
        assert_eq!(d.class_counts[&2], 0);
        assert_eq!(d.class_counts.values().sum::<u64>(), d.len() as u64);
        assert!(d.chronologically_sorted);
    }

    #[test]
    fn unsorted_timestamps_detected() {
        let d = Dataset::new(toy_spec(), vec![flat(0, 5.0), flat(0, 3.0)]);
        assert!(!d.chronologically_sorted);
    }

    #[test]
    fn caps_downsample_to_exact_cap_deterministically() {
        let recs: Vec<_> = (0..1000).map(|i| flat(0, i as f64)).collect();
        let d = Dataset::new(small_caps_spec(100, 50), recs);
        let capped = d.clone().apply_caps(7);
        assert_eq!(capped.class_counts[&0], 100);

        // Same seed, same surviving index set.
        let again = d.clone().apply_caps(7);
        let ts_a: Vec<_> = capped.records.iter().map(|r| r.timestamp).collect();
        let ts_b: Vec<_> = again.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts_a, ts_b);

        // Different seed, (almost surely) different set.
        let other = d.apply_caps(8);
        let ts_c: Vec<_> = other.records.iter().map(|r| r.timestamp).collect();
        assert_ne!(ts_a, ts_c);
    }

    #[test]
    fn caps_leave_underfull_dataset_identical() {
        let recs: Vec<_> = (0..30).map(|i| flat(if i % 3 == 0 { 1 } else { 0 }, i as f64)).collect();
        let d = Dataset::new(toy_spec(), recs);
        let before: Vec<_> = d.records.clone();
        let capped = d.apply_caps(1);
        assert_eq!(capped.records, before);
    }

    #[test]
    fn caps_preserve_record_order() {
        let recs: Vec<_> = (0..500).map(|i| flat(0, i as f64)).collect();
        let d = Dataset::new(small_caps_spec(50, 50), recs);
        let capped = d.apply_caps(3);
        let ts: Vec<f64> = capped.records.iter().map(|r| r.timestamp.unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(capped.chronologically_sorted);
    }

    proptest! {
        #[test]
        fn apply_caps_is_idempotent(
            n_benign in 0usize..200,
            n_mal in 0usize..200,
            cap in 1u64..80,
            seed in 0u64..50,
        ) {
            let recs: Vec<_> = (0..n_benign)
                .map(|i| flat(0, i as f64))
                .chain((0..n_mal).map(|i| flat(1, 1000.0 + i as f64)))
                .collect();
            let d = Dataset::new(small_caps_spec(cap, cap), recs);
            let once = d.apply_caps(seed);
            let twice = once.clone().apply_caps(seed);
            prop_assert_eq!(&once.records, &twice.records);
            for (&class, &count) in &once.class_counts {
                let limit = if class == 0 { cap } else { cap };
                prop_assert!(count <= limit, "class {} over cap: {}", class, count);
            }
        }
    }
}
