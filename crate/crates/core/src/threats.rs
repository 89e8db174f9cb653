//! Constraint-respecting traffic inflation and robustness assessment.
//!
//! The attacker model is an internal host padding its own UDP flows: it can
//! lengthen a flow or append bytes, never shorten, and stays within physical
//! limits (MTU times packet count, a duration ceiling). Perturbation acts on
//! the base fields and re-derives every feature column that depends on them;
//! all other columns are untouched, bit for bit. A separate verifier replays
//! the constraints from first principles so a perturbation bug cannot
//! silently certify itself.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowstore::{
    BaseVar, Dataset, DatasetSpec, Expr, FeatureSet, FeatureView, FlowRecord,
};
use crate::pipelines::{PipelineError, TrainedPipeline};
use crate::{seeding, Scalar};

/// IANA protocol number for UDP.
pub const UDP: u16 = 17;

#[derive(Debug, Error)]
pub enum ThreatError {
    #[error("perturbation rule invalid: {0}")]
    BadRule(String),
    #[error(
        "perturbing {field} would not change any feature column; the dataset \
         spec maps no column to it and no recompute formula reads it"
    )]
    Unobservable { field: &'static str },
    #[error("derived feature `{feature}` has no compiled recompute formula")]
    NoRecomputeFormula { feature: String },
    #[error("clean and adversarial inputs differ in length: {clean} vs {adversarial} rows")]
    RowMismatch { clean: usize, adversarial: usize },
    #[error("robustness assessment requires the essential feature set; {what} carries {got}")]
    NotEssential { what: &'static str, got: String },
    #[error("no rows to assess")]
    NoRows,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    Duration,
    Bytes,
    Both,
}

impl PerturbMode {
    fn touches_duration(self) -> bool {
        matches!(self, PerturbMode::Duration | PerturbMode::Both)
    }

    fn touches_bytes(self) -> bool {
        matches!(self, PerturbMode::Bytes | PerturbMode::Both)
    }
}

/// What the attacker may add and the physics they cannot exceed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationRule {
    /// Seconds; one is sampled per perturbed row.
    pub duration_increments: Vec<f64>,
    pub byte_increments: Vec<u64>,
    /// Padding packets as well is possible in principle but stays off unless
    /// explicitly enabled; standard assessments never use it.
    pub packet_increments: Option<Vec<u64>>,
    pub mtu_bytes: u64,
    /// Overrides the dataset spec's flow duration ceiling when set.
    pub max_flow_duration_seconds: Option<f64>,
    pub mode: PerturbMode,
}

impl Default for PerturbationRule {
    fn default() -> Self {
        PerturbationRule {
            duration_increments: vec![1.0, 2.0, 5.0],
            byte_increments: vec![1, 8, 64, 128, 512, 1024],
            packet_increments: None,
            mtu_bytes: 1500,
            max_flow_duration_seconds: None,
            mode: PerturbMode::Both,
        }
    }
}

impl PerturbationRule {
    pub fn validate(&self) -> Result<(), ThreatError> {
        let bad = |msg: String| Err(ThreatError::BadRule(msg));
        if self.mode.touches_duration() {
            if self.duration_increments.is_empty() {
                return bad("no duration increments".into());
            }
            if let Some(&v) =
                self.duration_increments.iter().find(|v| !v.is_finite() || **v <= 0.0)
            {
                return bad(format!("duration increment {v} is not a positive finite number"));
            }
        }
        if self.mode.touches_bytes() {
            if self.byte_increments.is_empty() {
                return bad("no byte increments".into());
            }
            if self.byte_increments.contains(&0) {
                return bad("byte increment 0 would be a no-op".into());
            }
        }
        if let Some(p) = &self.packet_increments {
            if p.is_empty() || p.contains(&0) {
                return bad("packet increments must be non-empty and positive".into());
            }
        }
        if self.mtu_bytes == 0 {
            return bad("mtu of 0 bytes".into());
        }
        if let Some(d) = self.max_flow_duration_seconds {
            if !d.is_finite() || d <= 0.0 {
                return bad(format!("flow duration ceiling {d} is not positive and finite"));
            }
        }
        Ok(())
    }

    fn touches_packets(&self) -> bool {
        self.packet_increments.is_some()
    }
}

/// Rows an internal-padding attacker can act on: malicious, UDP, and sourced
/// from inside the monitored network. An empty result is a legal outcome.
pub fn eligible_rows<S: Scalar>(d: &Dataset<S>, candidates: &[usize]) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| {
            let r = &d.records[i];
            r.class_id > 0 && r.protocol == Some(UDP) && r.src_internal
        })
        .collect()
}

/// Compiled plan for pushing base-field changes back into feature columns.
struct Resync<'a> {
    duration_pos: Option<usize>,
    bytes_pos: Option<usize>,
    packets_pos: Option<usize>,
    unit: f64,
    derived: Vec<(usize, &'a Expr)>,
}

impl<'a> Resync<'a> {
    fn plan(spec: &'a DatasetSpec, rule: &PerturbationRule) -> Result<Resync<'a>, ThreatError> {
        let pos = |col: &Option<String>| {
            col.as_deref().and_then(|name| spec.feature_position(name))
        };
        let mut derived = Vec::with_capacity(spec.derived_rules.len());
        for dr in &spec.derived_rules {
            let expr = dr
                .expr
                .as_ref()
                .ok_or_else(|| ThreatError::NoRecomputeFormula { feature: dr.feature.clone() })?;
            // Validation pins derived features inside the complete list.
            let p = spec
                .feature_position(&dr.feature)
                .ok_or_else(|| ThreatError::NoRecomputeFormula { feature: dr.feature.clone() })?;
            derived.push((p, expr));
        }
        let plan = Resync {
            duration_pos: pos(&spec.base_columns.duration),
            bytes_pos: pos(&spec.base_columns.tot_bytes),
            packets_pos: pos(&spec.base_columns.tot_packets),
            unit: spec.base_columns.duration_unit_seconds,
            derived,
        };
        // A change nothing in feature space can see would silently produce a
        // no-op attack; refuse instead.
        let observable = |col: Option<usize>, var: BaseVar| {
            col.is_some() || plan.derived.iter().any(|(_, e)| e.mentions(var))
        };
        if rule.mode.touches_duration() && !observable(plan.duration_pos, BaseVar::Duration) {
            return Err(ThreatError::Unobservable { field: "duration" });
        }
        if rule.mode.touches_bytes() && !observable(plan.bytes_pos, BaseVar::TotBytes) {
            return Err(ThreatError::Unobservable { field: "tot_bytes" });
        }
        if rule.touches_packets() && !observable(plan.packets_pos, BaseVar::TotPackets) {
            return Err(ThreatError::Unobservable { field: "tot_packets" });
        }
        Ok(plan)
    }

    /// Rewrite the columns that mirror or derive from the base fields.
    /// Derived formulas run last so they win if a spec maps a base column
    /// onto a derived feature.
    fn apply<S: Scalar>(&self, features: &mut [S], base: &crate::flowstore::BaseFields) {
        if let Some(p) = self.duration_pos {
            features[p] = S::from_f64(base.duration / self.unit).unwrap();
        }
        if let Some(p) = self.bytes_pos {
            features[p] = S::from_f64(base.tot_bytes as f64).unwrap();
        }
        if let Some(p) = self.packets_pos {
            features[p] = S::from_f64(base.tot_packets as f64).unwrap();
        }
        for &(p, expr) in &self.derived {
            features[p] = S::from_f64(expr.eval(base)).unwrap();
        }
    }
}

/// Inflate each record once. Every row draws from its own seed (derived from
/// `seed` and the row position), so results do not depend on evaluation
/// order. Never decreases a base field; caps clip, and a record already past
/// a cap keeps its original value.
pub fn perturb<S: Scalar>(
    spec: &DatasetSpec,
    records: &[FlowRecord<S>],
    rule: &PerturbationRule,
    seed: u64,
) -> Result<Vec<FlowRecord<S>>, ThreatError> {
    rule.validate()?;
    let plan = Resync::plan(spec, rule)?;
    let max_duration =
        rule.max_flow_duration_seconds.unwrap_or(spec.max_flow_duration_seconds);

    let mut out = Vec::with_capacity(records.len());
    for (i, original) in records.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seeding::split_seed(seed, i as u64));
        let mut r = original.clone();

        // Packets first: the byte cap depends on the final packet count.
        if let Some(increments) = &rule.packet_increments {
            let inc = *increments.choose(&mut rng).unwrap();
            r.base.tot_packets = r.base.tot_packets.saturating_add(inc);
        }
        if rule.mode.touches_duration() {
            let inc = *rule.duration_increments.choose(&mut rng).unwrap();
            r.base.duration = (r.base.duration + inc).min(max_duration).max(r.base.duration);
        }
        if rule.mode.touches_bytes() {
            let inc = *rule.byte_increments.choose(&mut rng).unwrap();
            let cap = rule.mtu_bytes.saturating_mul(r.base.tot_packets);
            r.base.tot_bytes =
                r.base.tot_bytes.saturating_add(inc).min(cap).max(r.base.tot_bytes);
        }

        plan.apply(&mut r.features, &r.base);
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    DurationDecreased,
    BytesDecreased,
    PacketsDecreased,
    MtuCapExceeded,
    DurationCapExceeded,
    /// A derived column disagrees with its formula over the new base fields.
    DerivedDrift { feature: String },
    /// A base-mapped column disagrees with the new base field.
    BaseColumnDrift { feature: String },
    /// A column with no reason to move moved.
    UntouchedFeatureChanged { feature: String },
    /// Label, timestamp, protocol or locality changed.
    IdentityChanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub row: usize,
    pub kind: ViolationKind,
}

/// Re-check every constraint from first principles. Returns one entry per
/// violated (row, constraint) pair; a clean perturbation returns an empty
/// list. Feature comparisons are exact, no tolerance.
pub fn verify_perturbation<S: Scalar>(
    spec: &DatasetSpec,
    original: &[FlowRecord<S>],
    perturbed: &[FlowRecord<S>],
    rule: &PerturbationRule,
) -> Result<Vec<Violation>, ThreatError> {
    if original.len() != perturbed.len() {
        return Err(ThreatError::RowMismatch {
            clean: original.len(),
            adversarial: perturbed.len(),
        });
    }
    let max_duration =
        rule.max_flow_duration_seconds.unwrap_or(spec.max_flow_duration_seconds);
    let unit = spec.base_columns.duration_unit_seconds;
    let derived_for = |name: &str| {
        spec.derived_rules.iter().find(|d| d.feature == name).map(|d| d.expr())
    };
    let base_field_for = |name: &str| -> Option<BaseVar> {
        let hit = |col: &Option<String>| col.as_deref() == Some(name);
        if hit(&spec.base_columns.duration) {
            Some(BaseVar::Duration)
        } else if hit(&spec.base_columns.tot_bytes) {
            Some(BaseVar::TotBytes)
        } else if hit(&spec.base_columns.tot_packets) {
            Some(BaseVar::TotPackets)
        } else {
            None
        }
    };

    let mut violations = Vec::new();
    for (row, (o, p)) in original.iter().zip(perturbed).enumerate() {
        let mut flag = |kind: ViolationKind| violations.push(Violation { row, kind });

        if p.base.duration < o.base.duration {
            flag(ViolationKind::DurationDecreased);
        }
        if p.base.tot_bytes < o.base.tot_bytes {
            flag(ViolationKind::BytesDecreased);
        }
        if p.base.tot_packets < o.base.tot_packets {
            flag(ViolationKind::PacketsDecreased);
        }
        let byte_cap = rule.mtu_bytes.saturating_mul(p.base.tot_packets).max(o.base.tot_bytes);
        if p.base.tot_bytes > byte_cap {
            flag(ViolationKind::MtuCapExceeded);
        }
        if p.base.duration > max_duration.max(o.base.duration) {
            flag(ViolationKind::DurationCapExceeded);
        }
        if (p.class_id, p.timestamp, p.protocol, p.src_internal)
            != (o.class_id, o.timestamp, o.protocol, o.src_internal)
        {
            flag(ViolationKind::IdentityChanged);
        }

        for (idx, name) in spec.feature_lists.complete.iter().enumerate() {
            let got = p.features[idx];
            if let Some(expr) = derived_for(name) {
                if got != S::from_f64(expr.eval(&p.base)).unwrap() {
                    flag(ViolationKind::DerivedDrift { feature: name.clone() });
                }
            } else if let Some(var) = base_field_for(name) {
                let want = match var {
                    BaseVar::Duration => p.base.duration / unit,
                    BaseVar::TotBytes => p.base.tot_bytes as f64,
                    BaseVar::TotPackets => p.base.tot_packets as f64,
                };
                if got != S::from_f64(want).unwrap() {
                    flag(ViolationKind::BaseColumnDrift { feature: name.clone() });
                }
            } else if got != o.features[idx] {
                flag(ViolationKind::UntouchedFeatureChanged { feature: name.clone() });
            }
        }
    }
    Ok(violations)
}

/// Detection rates of one pipeline on aligned clean and perturbed rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvResult {
    pub n_eligible: u64,
    /// Detection rate on the unmodified rows.
    pub tpr_org: f64,
    /// Detection rate on the same rows after perturbation.
    pub tpr_adv: f64,
    /// The attack worked: perturbation lowered the detection rate.
    pub success: bool,
}

/// Run one pipeline over row-aligned clean and adversarial views.
///
/// Only essential-set pipelines make sense here: the complete set contains
/// columns an attacker cannot know, so a complete-set assessment would be
/// answering a different question. All three inputs must carry the essential
/// tag.
pub fn assess_robustness<S: Scalar>(
    pipeline: &TrainedPipeline<S>,
    clean: &FeatureView<S>,
    adversarial: &FeatureView<S>,
) -> Result<AdvResult, ThreatError> {
    if clean.nrows() != adversarial.nrows() {
        return Err(ThreatError::RowMismatch {
            clean: clean.nrows(),
            adversarial: adversarial.nrows(),
        });
    }
    if clean.nrows() == 0 {
        return Err(ThreatError::NoRows);
    }
    let essential = |fs: Option<FeatureSet>, what: &'static str| match fs {
        Some(FeatureSet::Essential) => Ok(()),
        other => Err(ThreatError::NotEssential {
            what,
            got: other.map_or_else(|| "no feature set tag".into(), |f| format!("{f:?}")),
        }),
    };
    essential(pipeline.feature_set, "the pipeline")?;
    essential(clean.feature_set(), "the clean view")?;
    essential(adversarial.feature_set(), "the adversarial view")?;

    let rate = |hits: &[u8]| hits.iter().map(|&h| f64::from(h)).sum::<f64>() / hits.len() as f64;
    let tpr_org = rate(&pipeline.detect(clean)?);
    let tpr_adv = rate(&pipeline.detect(adversarial)?);
    Ok(AdvResult {
        n_eligible: clean.nrows() as u64,
        tpr_org,
        tpr_adv,
        success: tpr_adv < tpr_org,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowstore::{project_records, BaseFields, TOY_SPEC};

    fn toy_spec() -> DatasetSpec {
        DatasetSpec::from_toml(TOY_SPEC).unwrap()
    }

    /// Record whose feature columns are consistent with its base fields.
    fn flow(class: u32, proto: u16, internal: bool, base: BaseFields) -> FlowRecord<f64> {
        let rate = if base.duration == 0.0 { 0.0 } else { base.tot_bytes as f64 / base.duration };
        FlowRecord {
            features: vec![
                base.duration,
                base.tot_bytes as f64,
                base.tot_packets as f64,
                rate,
                53.0,
                40000.0,
            ],
            class_id: class,
            timestamp: Some(0.0),
            protocol: Some(proto),
            src_internal: internal,
            base,
        }
    }

    fn udp_attack(duration: f64, bytes: u64, packets: u64) -> FlowRecord<f64> {
        flow(1, UDP, true, BaseFields { duration, tot_bytes: bytes, tot_packets: packets })
    }

    #[test]
    fn eligibility_needs_all_three_conditions() {
        let recs = vec![
            udp_attack(1.0, 500, 5),             // eligible
            flow(0, UDP, true, BaseFields::ZERO), // benign
            flow(1, 6, true, BaseFields::ZERO),   // tcp
            flow(1, UDP, false, BaseFields::ZERO), // external source
        ];
        let d = Dataset::new(toy_spec(), recs);
        let all: Vec<usize> = (0..d.len()).collect();
        assert_eq!(eligible_rows(&d, &all), vec![0]);
        assert_eq!(eligible_rows(&d, &[1, 2, 3]), Vec::<usize>::new());
    }

    #[test]
    fn perturbation_increases_and_recomputes() {
        let spec = toy_spec();
        let recs: Vec<_> = (0..50).map(|i| udp_attack(2.0, 400 + i, 10)).collect();
        let rule = PerturbationRule::default();
        let adv = perturb(&spec, &recs, &rule, 99).unwrap();
        for (o, p) in recs.iter().zip(&adv) {
            assert!(p.base.duration > o.base.duration);
            assert!(p.base.tot_bytes > o.base.tot_bytes);
            assert_eq!(p.base.tot_packets, o.base.tot_packets);
            assert_eq!(p.features[0], p.base.duration);
            assert_eq!(p.features[1], p.base.tot_bytes as f64);
            assert_eq!(p.features[3], p.base.tot_bytes as f64 / p.base.duration);
            // Ports unrelated to the base fields never move.
            assert_eq!(p.features[4], o.features[4]);
            assert_eq!(p.features[5], o.features[5]);
        }
        assert!(verify_perturbation(&spec, &recs, &adv, &rule).unwrap().is_empty());
    }

    #[test]
    fn caps_clip_but_never_reduce() {
        let spec = toy_spec();
        // 10 packets at mtu 1500 caps bytes at 15000; this flow is 8 bytes
        // short of it, so every increment in the list must clip.
        let near_byte_cap = udp_attack(1.0, 14992, 10);
        // Already past the duration ceiling (dirty capture): must stay put.
        let over_duration = udp_attack(5000.0, 100, 10);
        let recs = vec![near_byte_cap, over_duration];
        let rule = PerturbationRule {
            byte_increments: vec![64, 512],
            ..PerturbationRule::default()
        };
        let adv = perturb(&spec, &recs, &rule, 5).unwrap();
        assert_eq!(adv[0].base.tot_bytes, 15000);
        assert_eq!(adv[1].base.duration, 5000.0);
        assert!(verify_perturbation(&spec, &recs, &adv, &rule).unwrap().is_empty());
    }

    #[test]
    fn per_row_seeds_make_order_irrelevant() {
        let spec = toy_spec();
        let recs: Vec<_> = (0..20).map(|i| udp_attack(1.0 + i as f64, 1000, 20)).collect();
        let rule = PerturbationRule::default();
        let all = perturb(&spec, &recs, &rule, 7).unwrap();
        let tail = perturb(&spec, &recs[5..], &rule, 7).unwrap();
        // Row 5 perturbed alone draws from seed (7, 0), not (7, 5); only the
        // full-slice call reproduces the campaign's choices.
        let again = perturb(&spec, &recs, &rule, 7).unwrap();
        assert_eq!(all, again);
        assert_eq!(tail.len(), 15);
    }

    #[test]
    fn duration_only_mode_leaves_bytes_alone() {
        let spec = toy_spec();
        let recs = vec![udp_attack(3.0, 900, 9); 10];
        let rule =
            PerturbationRule { mode: PerturbMode::Duration, ..PerturbationRule::default() };
        let adv = perturb(&spec, &recs, &rule, 11).unwrap();
        for (o, p) in recs.iter().zip(&adv) {
            assert_eq!(p.base.tot_bytes, o.base.tot_bytes);
            assert!(p.base.duration > o.base.duration);
            let inc = p.base.duration - o.base.duration;
            assert!([1.0, 2.0, 5.0].contains(&inc), "unexpected increment {inc}");
        }
        assert!(verify_perturbation(&spec, &recs, &adv, &rule).unwrap().is_empty());
    }

    #[test]
    fn packet_mode_raises_the_byte_ceiling() {
        let spec = toy_spec();
        // At the byte cap already: without extra packets, bytes cannot grow.
        let recs = vec![udp_attack(1.0, 15000, 10)];
        let rule = PerturbationRule {
            packet_increments: Some(vec![2]),
            byte_increments: vec![1024],
            ..PerturbationRule::default()
        };
        let adv = perturb(&spec, &recs, &rule, 3).unwrap();
        assert_eq!(adv[0].base.tot_packets, 12);
        assert_eq!(adv[0].base.tot_bytes, 16024);
        assert!(verify_perturbation(&spec, &recs, &adv, &rule).unwrap().is_empty());
    }

    #[test]
    fn rule_validation_rejects_nonsense() {
        let ok = PerturbationRule::default();
        assert!(ok.validate().is_ok());
        let cases = [
            PerturbationRule { duration_increments: vec![], ..ok.clone() },
            PerturbationRule { duration_increments: vec![-1.0], ..ok.clone() },
            PerturbationRule { byte_increments: vec![0], ..ok.clone() },
            PerturbationRule { mtu_bytes: 0, ..ok.clone() },
            PerturbationRule { max_flow_duration_seconds: Some(0.0), ..ok.clone() },
            PerturbationRule { packet_increments: Some(vec![]), ..ok.clone() },
        ];
        for (i, rule) in cases.iter().enumerate() {
            assert!(
                matches!(rule.validate(), Err(ThreatError::BadRule(_))),
                "case {i} should fail validation"
            );
        }
        // Empty duration list is fine when the mode never draws from it.
        let bytes_only = PerturbationRule {
            duration_increments: vec![],
            mode: PerturbMode::Bytes,
            ..ok
        };
        assert!(bytes_only.validate().is_ok());
    }

    #[test]
    fn unobservable_base_field_is_refused() {
        let mut spec = toy_spec();
        // Sever every path from duration to feature space.
        spec.base_columns.duration = None;
        spec.derived_rules.clear();
        let recs = vec![udp_attack(1.0, 100, 2)];
        let err = perturb(&spec, &recs, &PerturbationRule::default(), 1).unwrap_err();
        assert!(matches!(err, ThreatError::Unobservable { field: "duration" }));
        // Bytes still reach the tot_bytes column, so a bytes-only rule works.
        let rule = PerturbationRule { mode: PerturbMode::Bytes, ..Default::default() };
        assert!(perturb(&spec, &recs, &rule, 1).is_ok());
    }

    #[test]
    fn verifier_catches_planted_tampering() {
        let spec = toy_spec();
        let recs: Vec<_> = (0..6).map(|_| udp_attack(2.0, 1000, 10)).collect();
        let rule = PerturbationRule::default();
        let mut adv = perturb(&spec, &recs, &rule, 13).unwrap();

        adv[0].base.duration = 1.0; // decrease
        adv[1].base.tot_bytes = 1_000_000; // past the mtu cap
        adv[2].features[3] += 0.5; // derived drift
        adv[3].features[5] = 9.0; // untouched column moved
        adv[4].class_id = 2; // identity
        let violations = verify_perturbation(&spec, &recs, &adv, &rule).unwrap();

        let kinds: Vec<(usize, &ViolationKind)> =
            violations.iter().map(|v| (v.row, &v.kind)).collect();
        assert!(kinds.contains(&(0, &ViolationKind::DurationDecreased)));
        assert!(kinds.contains(&(1, &ViolationKind::MtuCapExceeded)));
        assert!(kinds
            .iter()
            .any(|(r, k)| *r == 2 && matches!(k, ViolationKind::DerivedDrift { .. })));
        assert!(kinds
            .iter()
            .any(|(r, k)| *r == 3 && matches!(k, ViolationKind::UntouchedFeatureChanged { .. })));
        assert!(kinds.contains(&(4, &ViolationKind::IdentityChanged)));
        assert!(!violations.iter().any(|v| v.row == 5), "row 5 was left intact");
        // Planted decrease also desyncs row 0's duration column.
        assert!(kinds
            .iter()
            .any(|(r, k)| *r == 0 && matches!(k, ViolationKind::BaseColumnDrift { .. })));
    }

    #[test]
    fn assessment_demands_essential_views_and_alignment() {
        use crate::learners::LearnerKind;
        use crate::splitter::{static_split, AvailabilityLevel};

        let spec = toy_spec();
        // Benign flows are long, attacks are short bursts; duration separates
        // them, so inflating duration defeats the detector.
        let mut recs = Vec::new();
        for i in 0..80 {
            recs.push(flow(0, 6, false, BaseFields {
                duration: 50.0 + i as f64,
                tot_bytes: 5000,
                tot_packets: 50,
            }));
        }
        for i in 0..80 {
            recs.push(udp_attack(0.05 + f64::from(i % 7) * 0.01, 400, 4));
        }
        let d = Dataset::new(spec, recs);
        let split = static_split(&d, AvailabilityLevel::abundant(), 21).unwrap();
        let essential = crate::flowstore::project(&d, FeatureSet::Essential).unwrap();
        let p = crate::pipelines::train_pipeline(
            crate::pipelines::PipelineKind::Bd,
            &LearnerKind::dt(),
            &split,
            &essential,
            1,
        )
        .unwrap();

        let eligible = eligible_rows(&d, &split.all_eval_rows());
        assert!(!eligible.is_empty());
        let clean: Vec<_> = eligible.iter().map(|&i| d.records[i].clone()).collect();
        let rule = PerturbationRule {
            duration_increments: vec![100.0],
            mode: PerturbMode::Duration,
            ..Default::default()
        };
        let adv = perturb(&d.spec, &clean, &rule, 17).unwrap();
        let cv = project_records(&d.spec, &clean, FeatureSet::Essential).unwrap();
        let av = project_records(&d.spec, &adv, FeatureSet::Essential).unwrap();

        let res = assess_robustness(&p, &cv, &av).unwrap();
        assert_eq!(res.n_eligible as usize, eligible.len());
        assert_eq!(res.tpr_org, 1.0);
        assert!(res.tpr_adv < 0.5, "inflated flows should look benign");
        assert!(res.success);

        // Complete-set inputs are a category error here.
        let complete = project_records(&d.spec, &clean, FeatureSet::Complete).unwrap();
        assert!(matches!(
            assess_robustness(&p, &complete, &av),
            Err(ThreatError::NotEssential { what: "the clean view", .. })
        ));
        // Misaligned row counts are refused.
        let short = project_records(&d.spec, &adv[1..], FeatureSet::Essential).unwrap();
        assert!(matches!(
            assess_robustness(&p, &cv, &short),
            Err(ThreatError::RowMismatch { .. })
        ));
    }
}
