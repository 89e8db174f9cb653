//! Scenario runners and the record schema every trial produces.
//!
//! Three questions are asked of a trained pipeline. Closed: how well does it
//! separate the classes it saw in training? Unknown: how much of its
//! detection survives when one attack class is withheld from training and
//! only met at evaluation time? Adversarial: how much survives when an
//! attacker inflates the flows it controls? Each runner emits one
//! [`TrialRecord`] carrying the full factor combination, so downstream
//! aggregation never guesses where a number came from.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowstore::{project_records, Dataset, FeatureSet, FeatureView, ViewError};
use crate::learners::LearnerKind;
use crate::pipelines::{train_pipeline, PipelineError, PipelineKind, TrainedPipeline};
use crate::splitter::{exclude_class, Regime, SplitError, TrialSplit};
use crate::threats::{self, AdvResult, PerturbationRule, ThreatError};
use crate::{seeding, Scalar};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} truth labels but {predictions} predictions")]
    LengthMismatch { truth: usize, predictions: usize },
    #[error("family accuracy is defined for md and bmd, not {kind}")]
    AccuracyUndefined { kind: PipelineKind },
    #[error(
        "the unknown-attack scenario needs at least two attack classes in \
         training; this split has {available}"
    )]
    UnknownUndefined { available: usize },
    #[error("the {scenario} scenario requires the {expected:?} feature set, got {got:?}")]
    WrongFeatureSet { scenario: &'static str, expected: FeatureSet, got: Option<FeatureSet> },
    #[error("pipeline was trained from split {pipeline:#x} but evaluated against {split:#x}")]
    ForeignSplit { pipeline: u64, split: u64 },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Threat(#[from] ThreatError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    View(#[from] ViewError),
}

/// Detection quality on one evaluation pass.
///
/// Rates with an empty denominator are reported as 0 with the matching
/// `undefined_*` flag raised, never as NaN. `acc_mal` is family accuracy over
/// detected true-malicious rows (md: over all true-malicious rows);
/// `acc_mal_strict` always uses all true-malicious rows, making md and bmd
/// directly comparable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub fpr: f64,
    pub acc_mal: Option<f64>,
    pub acc_mal_strict: Option<f64>,
    pub n_pos: u64,
    pub n_neg: u64,
    #[serde(default)]
    pub undefined_tpr: bool,
    #[serde(default)]
    pub undefined_fpr: bool,
}

/// Confusion rates of a binary detector. Truth labels are collapsed: any
/// class above 0 counts as positive.
pub fn binary_metrics(y_true: &[u32], y_pred: &[u8]) -> Result<Metrics, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predictions: y_pred.len(),
        });
    }
    let (mut tp, mut r#fn, mut fp, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t > 0, p > 0) {
            (true, true) => tp += 1,
            (true, false) => r#fn += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let (n_pos, n_neg) = (tp + r#fn, fp + tn);
    Ok(Metrics {
        tpr: if n_pos == 0 { 0.0 } else { tp as f64 / n_pos as f64 },
        fpr: if n_neg == 0 { 0.0 } else { fp as f64 / n_neg as f64 },
        acc_mal: None,
        acc_mal_strict: None,
        n_pos,
        n_neg,
        undefined_tpr: n_pos == 0,
        undefined_fpr: n_neg == 0,
    })
}

struct FamilyCounts {
    correct: u64,
    total_malicious: u64,
    detected_malicious: u64,
}

fn family_counts(
    y_true: &[u32],
    families: &[u32],
    detected: &[u8],
) -> Result<FamilyCounts, EvalError> {
    if y_true.len() != families.len() || y_true.len() != detected.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predictions: families.len().min(detected.len()),
        });
    }
    let mut c = FamilyCounts { correct: 0, total_malicious: 0, detected_malicious: 0 };
    for ((&t, &f), &d) in y_true.iter().zip(families).zip(detected) {
        if t == 0 {
            continue;
        }
        c.total_malicious += 1;
        if d > 0 {
            c.detected_malicious += 1;
        }
        if f == t {
            c.correct += 1;
        }
    }
    Ok(c)
}

/// Family accuracy over the true-malicious rows. The denominator is what
/// separates the two designs that classify families: md answers for every
/// malicious row, bmd only for the rows its first stage caught. An empty
/// denominator yields 0.
pub fn malicious_accuracy(
    kind: PipelineKind,
    y_true: &[u32],
    families: &[u32],
    detected: &[u8],
) -> Result<f64, EvalError> {
    let c = family_counts(y_true, families, detected)?;
    let denominator = match kind {
        PipelineKind::Md => c.total_malicious,
        PipelineKind::Bmd => c.detected_malicious,
        other => return Err(EvalError::AccuracyUndefined { kind: other }),
    };
    Ok(if denominator == 0 { 0.0 } else { c.correct as f64 / denominator as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Closed,
    Unknown,
    Adversarial,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Closed => "closed",
            Scenario::Unknown => "unknown",
            Scenario::Adversarial => "adversarial",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The full factor combination one record answers for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factors {
    pub dataset: String,
    /// Learner kind name; exact hyperparameters ride on the record.
    pub algorithm: String,
    pub pipeline: PipelineKind,
    /// Availability level name (`limited`, `scarce`, ...).
    pub availability: String,
    pub feature_set: FeatureSet,
    pub regime: Regime,
    pub scenario: Scenario,
    pub trial: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "data", rename_all = "lowercase")]
pub enum Outcome {
    Detection(Metrics),
    Adversarial(AdvResult),
    /// The scenario did not apply (e.g. no perturbable rows); recorded so the
    /// gap is visible rather than silent.
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub factors: Factors,
    pub hyperparams: LearnerKind,
    pub outcome: Outcome,
    pub train_wall_seconds: f64,
    pub infer_wall_seconds: f64,
    pub fit_workers: usize,
    /// Inference is single-worker by contract.
    pub infer_workers: usize,
    pub split_id: u64,
}

fn eval_truth(split: &TrialSplit) -> Vec<u32> {
    split
        .eval_idx
        .iter()
        .flat_map(|(&class, rows)| rows.iter().map(move |_| class))
        .collect()
}

fn fit_workers_of<S: Scalar>(p: &TrainedPipeline<S>) -> usize {
    p.members.iter().map(|m| m.fit_cpu_core_count).max().unwrap_or(1)
}

fn check_same_split<S: Scalar>(
    p: &TrainedPipeline<S>,
    split: &TrialSplit,
) -> Result<(), EvalError> {
    let id = split.id();
    if p.split_id != id {
        return Err(EvalError::ForeignSplit { pipeline: p.split_id, split: id });
    }
    Ok(())
}

/// Evaluate one pipeline on the full evaluation set it was split with.
///
/// ed-r has no decision rule, so its closed-scenario number comes from its
/// own per-specialist protocol; that is the point of carrying it.
pub fn run_closed<S: Scalar>(
    p: &TrainedPipeline<S>,
    split: &TrialSplit,
    view: &FeatureView<S>,
    mut factors: Factors,
) -> Result<TrialRecord, EvalError> {
    check_same_split(p, split)?;
    factors.scenario = Scenario::Closed;

    let (metrics, infer_wall_seconds) = if p.kind == PipelineKind::EdR {
        let started = Instant::now();
        let report = p.evaluate_redundant(split, view)?;
        (report.averaged, started.elapsed().as_secs_f64())
    } else {
        let rows = split.all_eval_rows();
        let y_true = eval_truth(split);
        let e = view.select_rows(&rows);
        let wants_families = matches!(p.kind, PipelineKind::Md | PipelineKind::Bmd);

        let started = Instant::now();
        let detected = p.detect(&e)?;
        let families = if wants_families { Some(p.classify_family(&e)?) } else { None };
        let infer = started.elapsed().as_secs_f64();

        let mut m = binary_metrics(&y_true, &detected)?;
        if let Some(families) = families {
            let c = family_counts(&y_true, &families, &detected)?;
            let over = |d: u64| (d > 0).then(|| c.correct as f64 / d as f64);
            m.acc_mal = match p.kind {
                PipelineKind::Md => over(c.total_malicious),
                _ => over(c.detected_malicious),
            };
            m.acc_mal_strict = over(c.total_malicious);
        }
        (m, infer)
    };

    Ok(TrialRecord {
        factors,
        hyperparams: p.learner,
        outcome: Outcome::Detection(metrics),
        train_wall_seconds: p.train_wall_seconds,
        infer_wall_seconds,
        fit_workers: fit_workers_of(p),
        infer_workers: 1,
        split_id: p.split_id,
    })
}

/// Leave-one-attack-out evaluation.
///
/// For every attack class, retrain without it and measure how often the
/// detector still flags that class's evaluation rows (tpr) and how often it
/// flags benign ones (fpr); report the means. Requires the complete feature
/// set and at least two attack classes.
pub fn run_unknown<S: Scalar>(
    kind: PipelineKind,
    lk: &LearnerKind,
    split: &TrialSplit,
    view: &FeatureView<S>,
    workers: usize,
    mut factors: Factors,
) -> Result<TrialRecord, EvalError> {
    if view.feature_set() != Some(FeatureSet::Complete) {
        return Err(EvalError::WrongFeatureSet {
            scenario: "unknown-attack",
            expected: FeatureSet::Complete,
            got: view.feature_set(),
        });
    }
    factors.scenario = Scenario::Unknown;

    let attacks: Vec<u32> = split
        .train_idx
        .iter()
        .filter(|(&c, rows)| c > 0 && !rows.is_empty())
        .map(|(&c, _)| c)
        .collect();
    if attacks.len() < 2 {
        return Err(EvalError::UnknownUndefined { available: attacks.len() });
    }

    let benign = split.eval_rows(0);
    let mut train_wall_seconds = 0.0;
    let mut infer_wall_seconds = 0.0;
    let (mut tpr_sum, mut fpr_sum) = (0.0, 0.0);
    let mut n_pos = 0u64;
    let mut any_empty_class = false;

    for &class in &attacks {
        let held_out = exclude_class(split, class)?;
        let p = train_pipeline(kind, lk, &held_out, view, workers)?;
        train_wall_seconds += p.train_wall_seconds;

        let unknown = split.eval_rows(class);
        let rows: Vec<usize> = benign.iter().chain(unknown).copied().collect();
        let e = view.select_rows(&rows);
        let started = Instant::now();
        let detected = p.detect(&e)?;
        infer_wall_seconds += started.elapsed().as_secs_f64();

        let fp = detected[..benign.len()].iter().filter(|&&d| d == 1).count();
        let tp = detected[benign.len()..].iter().filter(|&&d| d == 1).count();
        if unknown.is_empty() {
            any_empty_class = true;
        } else {
            tpr_sum += tp as f64 / unknown.len() as f64;
        }
        if !benign.is_empty() {
            fpr_sum += fp as f64 / benign.len() as f64;
        }
        n_pos += unknown.len() as u64;
    }

    let k = attacks.len() as f64;
    let metrics = Metrics {
        tpr: tpr_sum / k,
        fpr: fpr_sum / k,
        acc_mal: None,
        acc_mal_strict: None,
        n_pos,
        n_neg: benign.len() as u64,
        undefined_tpr: any_empty_class,
        undefined_fpr: benign.is_empty(),
    };
    Ok(TrialRecord {
        factors,
        hyperparams: *lk,
        outcome: Outcome::Detection(metrics),
        train_wall_seconds,
        infer_wall_seconds,
        fit_workers: workers,
        infer_workers: 1,
        split_id: split.id(),
    })
}

/// Perturb the attacker-controlled evaluation rows and measure the detection
/// drop. Rows nobody can perturb (wrong protocol, external source, benign)
/// never enter; a dataset with no eligible rows yields a skip record.
pub fn run_adversarial<S: Scalar>(
    p: &TrainedPipeline<S>,
    d: &Dataset<S>,
    split: &TrialSplit,
    rule: &PerturbationRule,
    mut factors: Factors,
) -> Result<TrialRecord, EvalError> {
    check_same_split(p, split)?;
    if p.feature_set != Some(FeatureSet::Essential) {
        return Err(EvalError::WrongFeatureSet {
            scenario: "adversarial",
            expected: FeatureSet::Essential,
            got: p.feature_set,
        });
    }
    factors.scenario = Scenario::Adversarial;

    let eligible = threats::eligible_rows(d, &split.all_eval_rows());
    let record = |outcome, infer| TrialRecord {
        factors: factors.clone(),
        hyperparams: p.learner,
        outcome,
        train_wall_seconds: p.train_wall_seconds,
        infer_wall_seconds: infer,
        fit_workers: fit_workers_of(p),
        infer_workers: 1,
        split_id: p.split_id,
    };
    if eligible.is_empty() {
        return Ok(record(
            Outcome::Skipped {
                reason: "no eligible rows: needs malicious, udp, internal source".into(),
            },
            0.0,
        ));
    }

    let clean: Vec<_> = eligible.iter().map(|&i| d.records[i].clone()).collect();
    let seed = seeding::derive_seed(split.seed, &["perturb"]);
    let adv = threats::perturb(&d.spec, &clean, rule, seed)?;
    debug_assert!(
        threats::verify_perturbation(&d.spec, &clean, &adv, rule)
            .map(|v| v.is_empty())
            .unwrap_or(false),
        "perturbation violated its own constraints"
    );
    let clean_view = project_records(&d.spec, &clean, FeatureSet::Essential)?;
    let adv_view = project_records(&d.spec, &adv, FeatureSet::Essential)?;

    let started = Instant::now();
    let result = threats::assess_robustness(p, &clean_view, &adv_view)?;
    let infer = started.elapsed().as_secs_f64();
    Ok(record(Outcome::Adversarial(result), infer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowstore::{BaseFields, Dataset, DatasetSpec, FlowRecord, TOY_SPEC};
    use crate::splitter::{static_split, AvailabilityLevel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn binary_metrics_count_exactly() {
        // Truth: 3 malicious (classes 2, 5, 1), 3 benign.
        let y = [2, 0, 5, 0, 1, 0];
        let p = [1, 1, 0, 0, 1, 0];
        let m = binary_metrics(&y, &p).unwrap();
        assert_eq!(m.tpr, 2.0 / 3.0);
        assert_eq!(m.fpr, 1.0 / 3.0);
        assert_eq!((m.n_pos, m.n_neg), (3, 3));
        assert!(!m.undefined_tpr && !m.undefined_fpr);
    }

    #[test]
    fn all_benign_input_is_flagged_not_nan() {
        let y = [0, 0, 0];
        let p = [0, 1, 0];
        let m = binary_metrics(&y, &p).unwrap();
        assert_eq!(m.tpr, 0.0);
        assert!(m.undefined_tpr);
        assert!(!m.undefined_fpr);
        assert_eq!(m.fpr, 1.0 / 3.0);
    }

    #[test]
    fn length_mismatch_is_refused() {
        assert!(matches!(
            binary_metrics(&[0, 1], &[0]),
            Err(EvalError::LengthMismatch { truth: 2, predictions: 1 })
        ));
    }

    /// Worked example: 10 malicious rows, the cascade detects 6, and family
    /// labels are right on 3 of those. Denominators differ by design.
    #[test]
    fn family_accuracy_denominators() {
        let y_true: Vec<u32> = vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2];
        let detected: Vec<u8> = vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
        // Detected rows 0..=5: correct on rows 0, 1, 5.
        let families: Vec<u32> = vec![1, 1, 2, 2, 2, 2, 0, 0, 0, 0];
        let bmd =
            malicious_accuracy(PipelineKind::Bmd, &y_true, &families, &detected).unwrap();
        let md = malicious_accuracy(PipelineKind::Md, &y_true, &families, &detected).unwrap();
        assert_eq!(bmd, 0.5, "3 correct of 6 detected");
        assert_eq!(md, 0.3, "3 correct of 10 malicious");
        assert!(matches!(
            malicious_accuracy(PipelineKind::Bd, &y_true, &families, &detected),
            Err(EvalError::AccuracyUndefined { .. })
        ));
    }

    #[test]
    fn zero_denominator_family_accuracy_is_zero() {
        let acc = malicious_accuracy(PipelineKind::Bmd, &[1, 1], &[0, 0], &[0, 0]).unwrap();
        assert_eq!(acc, 0.0);
        let none = malicious_accuracy(PipelineKind::Md, &[0, 0], &[0, 0], &[0, 0]).unwrap();
        assert_eq!(none, 0.0);
    }

    /// Well-separated clusters; class c sits at (10c, 10c). Timestamps climb
    /// with the index so temporal splits work too.
    fn clustered(per_class: usize, attacks: u32, seed: u64) -> Dataset<f64> {
        let mut spec = DatasetSpec::from_toml(TOY_SPEC).unwrap();
        for c in 1..=attacks {
            spec.class_table.entry(c).or_insert_with(|| format!("attack{c}"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut records = Vec::new();
        for class in 0..=attacks {
            for i in 0..per_class {
                let cx = 10.0 * class as f64;
                records.push(FlowRecord {
                    features: vec![
                        cx + rng.random_range(-1.0..1.0),
                        cx + rng.random_range(-1.0..1.0),
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                        443.0,
                        50000.0,
                    ],
                    class_id: class,
                    timestamp: Some(i as f64),
                    protocol: Some(17),
                    src_internal: true,
                    base: BaseFields { duration: 1.0, tot_bytes: 100, tot_packets: 5 },
                });
            }
        }
        Dataset::new(spec, records)
    }

    fn complete_view(d: &Dataset<f64>) -> FeatureView<f64> {
        crate::flowstore::project(d, FeatureSet::Complete).unwrap()
    }

    fn factors(seed: u64) -> Factors {
        Factors {
            dataset: "toy".into(),
            algorithm: "dt".into(),
            pipeline: PipelineKind::Bd,
            availability: "abundant".into(),
            feature_set: FeatureSet::Complete,
            regime: Regime::Static,
            scenario: Scenario::Closed,
            trial: 0,
            seed,
        }
    }

    #[test]
    fn closed_run_on_separable_data_is_clean() {
        let d = clustered(60, 2, 31);
        let split = static_split(&d, AvailabilityLevel::abundant(), 32).unwrap();
        let view = complete_view(&d);
        let lk = LearnerKind::dt();
        for kind in [PipelineKind::Bd, PipelineKind::Md, PipelineKind::Bmd] {
            let p = train_pipeline(kind, &lk, &split, &view, 1).unwrap();
            let mut f = factors(32);
            f.pipeline = kind;
            let rec = run_closed(&p, &split, &view, f).unwrap();
            let Outcome::Detection(m) = &rec.outcome else { panic!("expected detection") };
            assert_eq!(m.tpr, 1.0, "{kind}");
            assert_eq!(m.fpr, 0.0, "{kind}");
            match kind {
                PipelineKind::Bd => assert!(m.acc_mal.is_none()),
                _ => {
                    assert_eq!(m.acc_mal, Some(1.0), "{kind}");
                    assert_eq!(m.acc_mal_strict, Some(1.0), "{kind}");
                }
            }
            assert_eq!(rec.split_id, split.id());
            assert_eq!(rec.factors.scenario, Scenario::Closed);
            assert!(rec.infer_wall_seconds >= 0.0);
            assert_eq!(rec.infer_workers, 1);
        }
    }

    #[test]
    fn closed_run_covers_the_redundant_protocol() {
        let d = clustered(60, 2, 33);
        let split = static_split(&d, AvailabilityLevel::abundant(), 34).unwrap();
        let view = complete_view(&d);
        let p = train_pipeline(PipelineKind::EdR, &LearnerKind::dt(), &split, &view, 1).unwrap();
        let rec = run_closed(&p, &split, &view, factors(34)).unwrap();
        let Outcome::Detection(m) = &rec.outcome else { panic!("expected detection") };
        assert_eq!(m.tpr, 1.0);
        assert_eq!(m.fpr, 0.0);
    }

    #[test]
    fn foreign_split_is_refused() {
        let d = clustered(40, 1, 35);
        let split_a = static_split(&d, AvailabilityLevel::abundant(), 1).unwrap();
        let split_b = static_split(&d, AvailabilityLevel::abundant(), 2).unwrap();
        let view = complete_view(&d);
        let p = train_pipeline(PipelineKind::Bd, &LearnerKind::dt(), &split_a, &view, 1).unwrap();
        assert!(matches!(
            run_closed(&p, &split_b, &view, factors(1)),
            Err(EvalError::ForeignSplit { .. })
        ));
    }

    #[test]
    fn unknown_run_averages_over_held_out_classes() {
        // Attacks 1 and 2 sit in each other's neighborhood (10, 20); attack 3
        // would be far away. Two close clusters mean a model trained without
        // one still flags some of it; exact values are data-dependent, so the
        // test pins structure: record shape, class coverage, mean bounds.
        let d = clustered(60, 3, 36);
        let split = static_split(&d, AvailabilityLevel::abundant(), 37).unwrap();
        let view = complete_view(&d);
        let rec = run_unknown(
            PipelineKind::Bd,
            &LearnerKind::dt(),
            &split,
            &view,
            1,
            factors(37),
        )
        .unwrap();
        let Outcome::Detection(m) = &rec.outcome else { panic!("expected detection") };
        assert!((0.0..=1.0).contains(&m.tpr));
        assert!((0.0..=1.0).contains(&m.fpr));
        assert_eq!(m.n_pos, 3 * 12, "three held-out classes, 12 eval rows each");
        assert_eq!(m.n_neg, 12);
        assert_eq!(rec.factors.scenario, Scenario::Unknown);
        assert_eq!(rec.split_id, split.id());
        assert!(rec.train_wall_seconds > 0.0, "three retrains happened");
    }

    #[test]
    fn unknown_run_needs_two_attacks_and_complete_features() {
        let d = clustered(60, 1, 38);
        let split = static_split(&d, AvailabilityLevel::abundant(), 39).unwrap();
        let view = complete_view(&d);
        assert!(matches!(
            run_unknown(PipelineKind::Bd, &LearnerKind::dt(), &split, &view, 1, factors(39)),
            Err(EvalError::UnknownUndefined { available: 1 })
        ));

        let d2 = clustered(60, 2, 40);
        let split2 = static_split(&d2, AvailabilityLevel::abundant(), 41).unwrap();
        let essential = crate::flowstore::project(&d2, FeatureSet::Essential).unwrap();
        assert!(matches!(
            run_unknown(
                PipelineKind::Bd,
                &LearnerKind::dt(),
                &split2,
                &essential,
                1,
                factors(41)
            ),
            Err(EvalError::WrongFeatureSet { scenario: "unknown-attack", .. })
        ));
    }

    /// Benign long flows vs short malicious bursts, separable on duration
    /// only; inflating duration pushes attacks into the benign region.
    fn duration_separated() -> Dataset<f64> {
        let spec = DatasetSpec::from_toml(TOY_SPEC).unwrap();
        let mut records = Vec::new();
        let mut push = |class: u32, duration: f64, internal: bool, proto: u16| {
            let base = BaseFields { duration, tot_bytes: 4000, tot_packets: 10 };
            records.push(FlowRecord {
                features: vec![
                    duration,
                    4000.0,
                    10.0,
                    if duration == 0.0 { 0.0 } else { 4000.0 / duration },
                    53.0,
                    50000.0,
                ],
                class_id: class,
                timestamp: Some(records.len() as f64),
                protocol: Some(proto),
                src_internal: internal,
                base,
            });
        };
        for i in 0..100 {
            push(0, 100.0 + i as f64, false, 17);
        }
        for i in 0..100 {
            push(1, 0.05 + f64::from(i % 5) * 0.02, true, 17);
        }
        Dataset::new(spec, records)
    }

    #[test]
    fn adversarial_run_records_the_detection_drop() {
        let d = duration_separated();
        let split = static_split(&d, AvailabilityLevel::abundant(), 42).unwrap();
        let view = crate::flowstore::project(&d, FeatureSet::Essential).unwrap();
        let p = train_pipeline(PipelineKind::Bd, &LearnerKind::dt(), &split, &view, 1).unwrap();
        let rule = PerturbationRule {
            duration_increments: vec![200.0],
            mode: crate::threats::PerturbMode::Duration,
            ..Default::default()
        };
        let mut f = factors(42);
        f.feature_set = FeatureSet::Essential;
        let rec = run_adversarial(&p, &d, &split, &rule, f).unwrap();
        let Outcome::Adversarial(a) = &rec.outcome else { panic!("expected adversarial") };
        assert_eq!(a.n_eligible, 20, "20 eval rows of the attack class");
        assert_eq!(a.tpr_org, 1.0);
        assert!(a.tpr_adv < 1.0);
        assert!(a.success);
        assert_eq!(rec.factors.scenario, Scenario::Adversarial);
    }

    #[test]
    fn adversarial_run_skips_when_nothing_is_eligible() {
        // Same geometry but attacks ride tcp from outside: nothing to perturb.
        let mut d = duration_separated();
        for r in &mut d.records {
            if r.class_id > 0 {
                r.protocol = Some(6);
                r.src_internal = false;
            }
        }
        let d = Dataset::new(d.spec, d.records);
        let split = static_split(&d, AvailabilityLevel::abundant(), 43).unwrap();
        let view = crate::flowstore::project(&d, FeatureSet::Essential).unwrap();
        let p = train_pipeline(PipelineKind::Bd, &LearnerKind::dt(), &split, &view, 1).unwrap();
        let rec =
            run_adversarial(&p, &d, &split, &PerturbationRule::default(), factors(43)).unwrap();
        assert!(matches!(&rec.outcome, Outcome::Skipped { reason } if reason.contains("eligible")));
        assert_eq!(rec.infer_wall_seconds, 0.0);
    }

    #[test]
    fn adversarial_run_requires_an_essential_pipeline() {
        let d = duration_separated();
        let split = static_split(&d, AvailabilityLevel::abundant(), 44).unwrap();
        let view = complete_view(&d);
        let p = train_pipeline(PipelineKind::Bd, &LearnerKind::dt(), &split, &view, 1).unwrap();
        assert!(matches!(
            run_adversarial(&p, &d, &split, &PerturbationRule::default(), factors(44)),
            Err(EvalError::WrongFeatureSet { scenario: "adversarial", .. })
        ));
    }

    #[test]
    fn records_serialize_round_trip() {
        let d = clustered(60, 2, 45);
        let split = static_split(&d, AvailabilityLevel::abundant(), 46).unwrap();
        let view = complete_view(&d);
        let p = train_pipeline(PipelineKind::Bmd, &LearnerKind::hgb(), &split, &view, 1).unwrap();
        let rec = run_closed(&p, &split, &view, factors(46)).unwrap();
        let text = serde_json::to_string(&rec).unwrap();
        let back: TrialRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
    }
}
