//! Detector pipelines: compositions of trained learners behind uniform
//! detection and family-classification interfaces.
//!
//! Seven designs. BD collapses labels to benign/malicious and fits one binary
//! model. MD fits one (1+M)-class model. BMD cascades a BD stage into an
//! M-class family stage trained on malicious rows only. The ensemble designs
//! fit one binary specialist per attack class (each on benign T plus that
//! class's T) and differ in the decision rule: ED-o ORs the specialists, ED-v
//! requires at least half, ED-s feeds the specialists' 0/1 outputs to a
//! stacked binary model of the same learner kind. ED-r keeps the specialists
//! but is evaluation-only: each specialist is scored on benign E plus its own
//! class's E, an anti-pattern kept so its optimistic bias can be measured.
//!
//! Member seeds derive from the split seed and the member's role, never the
//! pipeline kind. BD's model and BMD's first stage are therefore identical,
//! and every ensemble sees the same specialists, whether members are shared
//! or retrained.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{binary_metrics, Metrics};
use crate::flowstore::{FeatureSet, FeatureView};
use crate::learners::{fit, FitOptions, LearnError, LearnerKind, TrainedModel};
use crate::splitter::TrialSplit;
use crate::{seeding, Scalar};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("split references row {index} but the view has {rows} rows")]
    SplitViewMismatch { index: usize, rows: usize },
    #[error("training set has no malicious rows; cannot build a detector")]
    NoMaliciousTraining,
    #[error("{op} is not defined for {kind} pipelines")]
    WrongKind { op: &'static str, kind: PipelineKind },
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PipelineKind {
    #[serde(rename = "bd")]
    Bd,
    #[serde(rename = "md")]
    Md,
    #[serde(rename = "bmd")]
    Bmd,
    #[serde(rename = "ed-o")]
    EdO,
    #[serde(rename = "ed-v")]
    EdV,
    #[serde(rename = "ed-s")]
    EdS,
    #[serde(rename = "ed-r")]
    EdR,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 7] = [
        PipelineKind::Bd,
        PipelineKind::Md,
        PipelineKind::Bmd,
        PipelineKind::EdO,
        PipelineKind::EdV,
        PipelineKind::EdS,
        PipelineKind::EdR,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PipelineKind::Bd => "bd",
            PipelineKind::Md => "md",
            PipelineKind::Bmd => "bmd",
            PipelineKind::EdO => "ed-o",
            PipelineKind::EdV => "ed-v",
            PipelineKind::EdS => "ed-s",
            PipelineKind::EdR => "ed-r",
        }
    }

    /// ED-r exists to demonstrate a flawed evaluation protocol; it has no
    /// deployable decision rule.
    pub fn deployable(&self) -> bool {
        !matches!(self, PipelineKind::EdR)
    }

    pub fn is_ensemble(&self) -> bool {
        matches!(
            self,
            PipelineKind::EdO | PipelineKind::EdV | PipelineKind::EdS | PipelineKind::EdR
        )
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One binary specialist per attack class, shareable across the ED designs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SpecialistSet<S: Scalar> {
    /// Attack class ids, ascending; `models[i]` recognizes `classes[i]`.
    pub classes: Vec<u32>,
    pub models: Vec<TrainedModel<S>>,
    /// View rows each specialist was fitted on (audit trail).
    pub train_rows: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainedPipeline<S: Scalar> {
    pub kind: PipelineKind,
    pub learner: LearnerKind,
    /// BD/MD: 1. BMD: binary stage then family stage. Ensembles: specialists
    /// in ascending class order, with the stacked model last for ED-s.
    pub members: Vec<TrainedModel<S>>,
    /// Class ids with at least one training row, ascending, benign included.
    pub classes: Vec<u32>,
    /// Attack classes with a specialist (ensembles; empty otherwise).
    pub specialist_classes: Vec<u32>,
    /// Feature set of the training view, echoed for scenario gating.
    pub feature_set: Option<FeatureSet>,
    /// Sum of member fit times.
    pub train_wall_seconds: f64,
    pub member_wall_seconds: Vec<f64>,
    /// View rows each member was fitted on (audit trail).
    pub member_train_rows: Vec<Vec<usize>>,
    /// Identity of the split this pipeline was trained from.
    pub split_id: u64,
}

/// Per-specialist and averaged metrics of the redundant evaluation protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RedundantReport {
    pub per_class: Vec<(u32, Metrics)>,
    /// Unweighted mean tpr/fpr over specialists; `n_pos` sums the class rows,
    /// `n_neg` is the shared benign evaluation count.
    pub averaged: Metrics,
}

fn check_split_view<S: Scalar>(
    split: &TrialSplit,
    view: &FeatureView<S>,
) -> Result<(), PipelineError> {
    let rows = view.nrows();
    for idx in split
        .train_idx
        .values()
        .chain(split.eval_idx.values())
        .flat_map(|v| v.iter().copied())
    {
        if idx >= rows {
            return Err(PipelineError::SplitViewMismatch { index: idx, rows });
        }
    }
    Ok(())
}

struct MemberFit<S: Scalar> {
    model: TrainedModel<S>,
    rows: Vec<usize>,
}

fn fit_member<S: Scalar>(
    lk: &LearnerKind,
    view: &FeatureView<S>,
    rows: Vec<usize>,
    y: &[u32],
    split: &TrialSplit,
    role: &[&str],
    workers: usize,
    allow_single_class: bool,
) -> Result<MemberFit<S>, PipelineError> {
    let mut tags = vec!["member"];
    tags.extend_from_slice(role);
    let opts = FitOptions {
        seed: seeding::derive_seed(split.seed, &tags),
        workers,
        allow_single_class,
    };
    let x = view.select_rows(&rows);
    let model = fit(lk, &x, y, &opts)?;
    Ok(MemberFit { model, rows })
}

/// Fit the binary benign/malicious model every BD and BMD shares.
fn fit_binary_stage<S: Scalar>(
    lk: &LearnerKind,
    split: &TrialSplit,
    view: &FeatureView<S>,
    workers: usize,
) -> Result<MemberFit<S>, PipelineError> {
    let rows = split.all_train_rows();
    let y: Vec<u32> = split
        .train_idx
        .iter()
        .flat_map(|(&class, rows)| rows.iter().map(move |_| u32::from(class > 0)))
        .collect();
    fit_member(lk, view, rows, &y, split, &["binary"], workers, false)
}

/// Fit one binary specialist per attack class present in training.
pub fn train_specialists<S: Scalar>(
    lk: &LearnerKind,
    split: &TrialSplit,
    view: &FeatureView<S>,
    workers: usize,
) -> Result<SpecialistSet<S>, PipelineError> {
    check_split_view(split, view)?;
    let malicious = trained_malicious(split);
    if malicious.is_empty() {
        return Err(PipelineError::NoMaliciousTraining);
    }
    let benign = split.train_rows(0);
    let mut models = Vec::with_capacity(malicious.len());
    let mut train_rows = Vec::with_capacity(malicious.len());
    for &class in &malicious {
        let own = split.train_rows(class);
        let rows: Vec<usize> = benign.iter().chain(own).copied().collect();
        let y: Vec<u32> = benign
            .iter()
            .map(|_| 0)
            .chain(own.iter().map(|_| 1))
            .collect();
        let fitted = fit_member(
            lk,
            view,
            rows,
            &y,
            split,
            &["specialist", &class.to_string()],
            workers,
            false,
        )?;
        models.push(fitted.model);
        train_rows.push(fitted.rows);
    }
    Ok(SpecialistSet { classes: malicious, models, train_rows })
}

fn trained_malicious(split: &TrialSplit) -> Vec<u32> {
    split
        .train_idx
        .iter()
        .filter(|(&c, rows)| c > 0 && !rows.is_empty())
        .map(|(&c, _)| c)
        .collect()
}

fn trained_classes(split: &TrialSplit) -> Vec<u32> {
    split.train_idx.iter().filter(|(_, rows)| !rows.is_empty()).map(|(&c, _)| c).collect()
}

/// Specialist 0/1 outputs as a feature view, the stacked model's input space.
fn stack_view<S: Scalar>(
    set: &SpecialistSet<S>,
    view: &FeatureView<S>,
    rows: &[usize],
) -> Result<FeatureView<S>, PipelineError> {
    let x = view.select_rows(rows);
    let mut columns: Vec<Vec<u32>> = Vec::with_capacity(set.models.len());
    for m in &set.models {
        columns.push(m.predict(&x)?);
    }
    let names: Vec<String> = set.classes.iter().map(|c| format!("says_{c}")).collect();
    let stacked: Vec<Vec<S>> = (0..rows.len())
        .map(|r| columns.iter().map(|col| S::from_u32(col[r]).unwrap()).collect())
        .collect();
    Ok(FeatureView::from_rows(names, stacked, None))
}

/// Build an ensemble pipeline from an existing specialist set; ED-s fits its
/// stacked model here. Sharing one set across the ED designs keeps their
/// member timings comparable.
pub fn assemble_ensemble<S: Scalar>(
    kind: PipelineKind,
    lk: &LearnerKind,
    set: &SpecialistSet<S>,
    split: &TrialSplit,
    view: &FeatureView<S>,
    workers: usize,
) -> Result<TrainedPipeline<S>, PipelineError> {
    assert!(kind.is_ensemble(), "assemble_ensemble called with {kind}");
    let mut members = set.models.clone();
    let mut member_train_rows = set.train_rows.clone();

    if kind == PipelineKind::EdS {
        let rows = split.all_train_rows();
        let inputs = stack_view(set, view, &rows)?;
        let y: Vec<u32> = split
            .train_idx
            .iter()
            .flat_map(|(&class, r)| r.iter().map(move |_| u32::from(class > 0)))
            .collect();
        let opts = FitOptions {
            seed: seeding::derive_seed(split.seed, &["member", "stack"]),
            workers,
            allow_single_class: false,
        };
        let stack = fit(lk, &inputs, &y, &opts)?;
        members.push(stack);
        member_train_rows.push(rows);
    }

    let member_wall_seconds: Vec<f64> = members.iter().map(|m| m.fit_wall_seconds).collect();
    Ok(TrainedPipeline {
        kind,
        learner: *lk,
        train_wall_seconds: member_wall_seconds.iter().sum(),
        member_wall_seconds,
        members,
        classes: trained_classes(split),
        specialist_classes: set.classes.clone(),
        feature_set: view.feature_set(),
        member_train_rows,
        split_id: split.id(),
    })
}

/// Train a pipeline of the requested design from one split.
pub fn train_pipeline<S: Scalar>(
    kind: PipelineKind,
    lk: &LearnerKind,
    split: &TrialSplit,
    view: &FeatureView<S>,
    workers: usize,
) -> Result<TrainedPipeline<S>, PipelineError> {
    check_split_view(split, view)?;
    let malicious = trained_malicious(split);
    if malicious.is_empty() {
        return Err(PipelineError::NoMaliciousTraining);
    }

    if kind.is_ensemble() {
        let set = train_specialists(lk, split, view, workers)?;
        return assemble_ensemble(kind, lk, &set, split, view, workers);
    }

    let mut members = Vec::new();
    let mut member_train_rows = Vec::new();
    match kind {
        PipelineKind::Bd => {
            let fitted = fit_binary_stage(lk, split, view, workers)?;
            members.push(fitted.model);
            member_train_rows.push(fitted.rows);
        }
        PipelineKind::Md => {
            let rows = split.all_train_rows();
            let y: Vec<u32> = split
                .train_idx
                .iter()
                .flat_map(|(&class, r)| r.iter().map(move |_| class))
                .collect();
            let fitted =
                fit_member(lk, view, rows, &y, split, &["multiclass"], workers, false)?;
            members.push(fitted.model);
            member_train_rows.push(fitted.rows);
        }
        PipelineKind::Bmd => {
            let stage1 = fit_binary_stage(lk, split, view, workers)?;
            members.push(stage1.model);
            member_train_rows.push(stage1.rows);

            // Family stage: malicious training rows only. A single attack
            // class degenerates to a constant family model, which is correct.
            let rows: Vec<usize> =
                malicious.iter().flat_map(|&c| split.train_rows(c)).copied().collect();
            let y: Vec<u32> = malicious
                .iter()
                .flat_map(|&c| split.train_rows(c).iter().map(move |_| c))
                .collect();
            let fitted = fit_member(lk, view, rows, &y, split, &["family"], workers, true)?;
            members.push(fitted.model);
            member_train_rows.push(fitted.rows);
        }
        _ => unreachable!("ensembles handled above"),
    }

    let member_wall_seconds: Vec<f64> = members.iter().map(|m| m.fit_wall_seconds).collect();
    Ok(TrainedPipeline {
        kind,
        learner: *lk,
        train_wall_seconds: member_wall_seconds.iter().sum(),
        member_wall_seconds,
        members,
        classes: trained_classes(split),
        specialist_classes: Vec::new(),
        feature_set: view.feature_set(),
        member_train_rows,
        split_id: split.id(),
    })
}

impl<S: Scalar> TrainedPipeline<S> {
    fn specialists(&self) -> &[TrainedModel<S>] {
        &self.members[..self.specialist_classes.len()]
    }

    /// Per-specialist 0/1 outputs, row-major.
    fn specialist_votes(&self, view: &FeatureView<S>) -> Result<Vec<Vec<u32>>, PipelineError> {
        self.specialists().iter().map(|m| m.predict(view).map_err(Into::into)).collect()
    }

    /// Binary detection: 1 = malicious. Not defined for ED-r.
    pub fn detect(&self, view: &FeatureView<S>) -> Result<Vec<u8>, PipelineError> {
        match self.kind {
            PipelineKind::Bd | PipelineKind::Bmd => {
                Ok(self.members[0].predict(view)?.into_iter().map(|c| c as u8).collect())
            }
            PipelineKind::Md => {
                Ok(self.members[0].predict(view)?.into_iter().map(|c| u8::from(c > 0)).collect())
            }
            PipelineKind::EdO => {
                let votes = self.specialist_votes(view)?;
                Ok((0..view.nrows())
                    .map(|r| u8::from(votes.iter().any(|col| col[r] == 1)))
                    .collect())
            }
            PipelineKind::EdV => {
                let votes = self.specialist_votes(view)?;
                let m = votes.len();
                let threshold = m.div_ceil(2);
                Ok((0..view.nrows())
                    .map(|r| {
                        let said = votes.iter().filter(|col| col[r] == 1).count();
                        u8::from(said >= threshold)
                    })
                    .collect())
            }
            PipelineKind::EdS => {
                let set_like = stack_rows(self, view)?;
                let stack = self.members.last().expect("stack member");
                Ok(stack.predict(&set_like)?.into_iter().map(|c| c as u8).collect())
            }
            PipelineKind::EdR => {
                Err(PipelineError::WrongKind { op: "detect", kind: self.kind })
            }
        }
    }

    /// Family labels with 0 as the benign sentinel. MD and BMD only.
    pub fn classify_family(&self, view: &FeatureView<S>) -> Result<Vec<u32>, PipelineError> {
        match self.kind {
            PipelineKind::Md => Ok(self.members[0].predict(view)?),
            PipelineKind::Bmd => {
                let detected = self.members[0].predict(view)?;
                let hits: Vec<usize> =
                    (0..view.nrows()).filter(|&r| detected[r] == 1).collect();
                let mut out = vec![0u32; view.nrows()];
                if !hits.is_empty() {
                    // Stage 2 runs only on rows stage 1 flagged.
                    let families = self.members[1].predict(&view.select_rows(&hits))?;
                    for (&r, family) in hits.iter().zip(families) {
                        out[r] = family;
                    }
                }
                Ok(out)
            }
            _ => Err(PipelineError::WrongKind { op: "classify_family", kind: self.kind }),
        }
    }

    /// The redundant evaluation protocol: specialist m is scored only on
    /// benign E plus its own class's E, and the per-specialist metrics are
    /// averaged. Defined only for ED-r.
    pub fn evaluate_redundant(
        &self,
        split: &TrialSplit,
        view: &FeatureView<S>,
    ) -> Result<RedundantReport, PipelineError> {
        if self.kind != PipelineKind::EdR {
            return Err(PipelineError::WrongKind { op: "evaluate_redundant", kind: self.kind });
        }
        let benign = split.eval_rows(0);
        let mut per_class = Vec::with_capacity(self.specialist_classes.len());
        let (mut tpr_sum, mut fpr_sum, mut n_pos) = (0.0, 0.0, 0u64);
        for (i, &class) in self.specialist_classes.iter().enumerate() {
            let own = split.eval_rows(class);
            let rows: Vec<usize> = benign.iter().chain(own).copied().collect();
            let y_true: Vec<u32> =
                benign.iter().map(|_| 0).chain(own.iter().map(|_| 1)).collect();
            let pred: Vec<u8> = self.members[i]
                .predict(&view.select_rows(&rows))?
                .into_iter()
                .map(|c| c as u8)
                .collect();
            let m = binary_metrics(&y_true, &pred).expect("aligned by construction");
            tpr_sum += m.tpr;
            fpr_sum += m.fpr;
            n_pos += m.n_pos;
            per_class.push((class, m));
        }
        let k = per_class.len() as f64;
        let averaged = Metrics {
            tpr: tpr_sum / k,
            fpr: fpr_sum / k,
            acc_mal: None,
            acc_mal_strict: None,
            n_pos,
            n_neg: benign.len() as u64,
            undefined_tpr: n_pos == 0,
            undefined_fpr: benign.is_empty(),
        };
        Ok(RedundantReport { per_class, averaged })
    }
}

fn stack_rows<S: Scalar>(
    p: &TrainedPipeline<S>,
    view: &FeatureView<S>,
) -> Result<FeatureView<S>, PipelineError> {
    let votes = p.specialist_votes(view)?;
    let names: Vec<String> =
        p.specialist_classes.iter().map(|c| format!("says_{c}")).collect();
    let rows: Vec<Vec<S>> = (0..view.nrows())
        .map(|r| votes.iter().map(|col| S::from_u32(col[r]).unwrap()).collect())
        .collect();
    Ok(FeatureView::from_rows(names, rows, None))
}
