//! Native learner implementations behind one fit/predict contract.
//!
//! Four supervised algorithms: decision tree (CART, gini), random forest,
//! L2-regularized logistic regression (full-batch gradient descent with
//! backtracking line search, one-vs-rest for multiclass), and histogram
//! gradient boosting (equal-frequency binning, second-order leaf values,
//! logistic/softmax loss). Fitting may use a caller-sized worker pool except
//! for the decision tree, which is single-worker; prediction is always
//! single-worker. Fixed seed means identical parameters and predictions.

pub mod forest;
pub mod hgb;
pub mod logreg;
pub mod tree;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowstore::FeatureView;
use crate::Scalar;

/// Bump when the serialized model layout changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("cannot fit on zero rows")]
    EmptyTrainingSet,
    #[error("label vector has {y} entries for {x} rows")]
    LabelLengthMismatch { x: usize, y: usize },
    #[error("non-finite feature value at view row {row}, column `{column}`")]
    NonFiniteFeature { row: usize, column: String },
    #[error("training labels contain only class {class}; pass allow_single_class to fit a constant model")]
    SingleClass { class: u32 },
    #[error("prediction schema mismatch: missing columns [{}], unexpected columns [{}]",
            .missing.join(", "), .unexpected.join(", "))]
    SchemaMismatch { missing: Vec<String>, unexpected: Vec<String> },
    #[error("bad hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("worker count must be at least 1")]
    NoWorkers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
}

impl Default for DtParams {
    fn default() -> Self {
        DtParams { max_depth: None, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturesPerSplit {
    /// ⌈√p⌉ candidate features per node.
    Sqrt,
    All,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub features_per_split: FeaturesPerSplit,
    pub tree: DtParams,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 100,
            bootstrap: true,
            features_per_split: FeaturesPerSplit::Sqrt,
            tree: DtParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// L2 penalty weight λ in `mean log-loss + λ/(2n)·‖w‖²` (bias free).
    pub strength: f64,
    pub max_iter: usize,
    /// Stop when the gradient's max-norm falls below this.
    pub tol: f64,
    /// Z-score inputs from training statistics inside the model.
    pub standardize: bool,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams { strength: 1.0, max_iter: 1000, tol: 1e-4, standardize: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HgbParams {
    pub n_iter: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub max_leaf_nodes: usize,
    pub min_samples_leaf: usize,
}

impl Default for HgbParams {
    fn default() -> Self {
        HgbParams {
            n_iter: 100,
            learning_rate: 0.1,
            max_bins: 255,
            max_leaf_nodes: 31,
            min_samples_leaf: 20,
        }
    }
}

/// Algorithm selector with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerKind {
    Dt(DtParams),
    Rf(RfParams),
    Lr(LrParams),
    Hgb(HgbParams),
}

impl LearnerKind {
    pub fn dt() -> LearnerKind {
        LearnerKind::Dt(DtParams::default())
    }

    pub fn rf() -> LearnerKind {
        LearnerKind::Rf(RfParams::default())
    }

    pub fn lr() -> LearnerKind {
        LearnerKind::Lr(LrParams::default())
    }

    pub fn hgb() -> LearnerKind {
        LearnerKind::Hgb(HgbParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Dt(_) => "dt",
            LearnerKind::Rf(_) => "rf",
            LearnerKind::Lr(_) => "lr",
            LearnerKind::Hgb(_) => "hgb",
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: String| Err(LearnError::BadHyperparams(msg));
        match self {
            LearnerKind::Dt(p) | LearnerKind::Rf(RfParams { tree: p, .. }) if p.min_samples_split < 2 => {
                bad(format!("min_samples_split {} < 2", p.min_samples_split))
            }
            LearnerKind::Rf(p) if p.n_trees < 1 => bad("n_trees must be at least 1".into()),
            LearnerKind::Rf(RfParams { features_per_split: FeaturesPerSplit::Fixed(0), .. }) => {
                bad("features_per_split fixed(0)".into())
            }
            LearnerKind::Lr(p) if p.max_iter < 1 => bad("max_iter must be at least 1".into()),
            LearnerKind::Lr(p) if !(p.tol > 0.0) => bad(format!("tol {} must be > 0", p.tol)),
            LearnerKind::Lr(p) if !(p.strength >= 0.0) => {
                bad(format!("strength {} must be >= 0", p.strength))
            }
            LearnerKind::Hgb(p) if p.n_iter < 1 => bad("n_iter must be at least 1".into()),
            LearnerKind::Hgb(p) if !(p.learning_rate > 0.0) => {
                bad(format!("learning_rate {} must be > 0", p.learning_rate))
            }
            LearnerKind::Hgb(p) if p.max_bins < 2 || p.max_bins > 255 => {
                bad(format!("max_bins {} outside 2..=255", p.max_bins))
            }
            LearnerKind::Hgb(p) if p.max_leaf_nodes < 2 => {
                bad("max_leaf_nodes must be at least 2".into())
            }
            LearnerKind::Hgb(p) if p.min_samples_leaf < 1 => {
                bad("min_samples_leaf must be at least 1".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub seed: u64,
    /// Worker-pool size offered to the algorithm (DT always uses 1).
    pub workers: usize,
    /// Permit a single-class label vector; fit returns a constant model.
    pub allow_single_class: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { seed: 0, workers: 1, allow_single_class: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
enum ModelInner<S: Scalar> {
    Constant { class: u32 },
    Tree(tree::TreeModel<S>),
    Forest(forest::ForestModel<S>),
    LogReg(logreg::LogRegModel),
    Hgb(hgb::HgbModel),
}

/// An immutable fitted model. Predicts only labels from `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainedModel<S: Scalar> {
    pub format_version: u32,
    pub kind: LearnerKind,
    /// Distinct training labels, ascending.
    pub classes: Vec<u32>,
    /// Column names the model was fitted on; prediction inputs must match.
    pub schema: Vec<String>,
    pub fit_wall_seconds: f64,
    pub fit_cpu_core_count: usize,
    inner: ModelInner<S>,
}

/// First index of the maximum; equal scores resolve to the lowest index,
/// hence the lowest class id when indices follow the ascending class list.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Order-preserving map over `0..n`, parallel only when `workers > 1`.
/// Serial and parallel paths produce identical output for deterministic `f`.
pub(crate) fn maybe_par_map<R: Send>(
    workers: usize,
    n: usize,
    f: impl Fn(usize) -> R + Sync + Send,
) -> Vec<R> {
    if workers <= 1 {
        (0..n).map(f).collect()
    } else {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
}

fn run_in_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers <= 1 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(f)
    }
}

/// Fit a model of the requested kind on `x` with labels `y`.
pub fn fit<S: Scalar>(
    kind: &LearnerKind,
    x: &FeatureView<S>,
    y: &[u32],
    opts: &FitOptions,
) -> Result<TrainedModel<S>, LearnError> {
    kind.validate()?;
    if opts.workers < 1 {
        return Err(LearnError::NoWorkers);
    }
    if x.nrows() == 0 {
        return Err(LearnError::EmptyTrainingSet);
    }
    if x.nrows() != y.len() {
        return Err(LearnError::LabelLengthMismatch { x: x.nrows(), y: y.len() });
    }
    for (row, vals) in x.rows().enumerate() {
        if let Some(c) = vals.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::NonFiniteFeature { row, column: x.column_names()[c].clone() });
        }
    }

    let mut classes: Vec<u32> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let started = Instant::now();

    if classes.len() == 1 {
        if !opts.allow_single_class {
            return Err(LearnError::SingleClass { class: classes[0] });
        }
        return Ok(TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: *kind,
            schema: x.column_names().to_vec(),
            fit_wall_seconds: started.elapsed().as_secs_f64(),
            fit_cpu_core_count: 1,
            inner: ModelInner::Constant { class: classes[0] },
            classes,
        });
    }

    // Class positions 0..k make votes and score vectors index directly.
    let k = classes.len();
    let y_pos: Vec<u32> =
        y.iter().map(|label| classes.binary_search(label).unwrap() as u32).collect();

    let (inner, cores) = match kind {
        LearnerKind::Dt(p) => {
            (ModelInner::Tree(tree::fit_tree(x, &y_pos, k, p)), 1)
        }
        LearnerKind::Rf(p) => (
            ModelInner::Forest(run_in_pool(opts.workers, || {
                forest::fit_forest(x, &y_pos, k, p, opts.seed, opts.workers)
            })),
            opts.workers,
        ),
        LearnerKind::Lr(p) => (
            ModelInner::LogReg(run_in_pool(opts.workers, || {
                logreg::fit_logreg(x, &y_pos, k, p, opts.workers)
            })),
            opts.workers,
        ),
        LearnerKind::Hgb(p) => (
            ModelInner::Hgb(run_in_pool(opts.workers, || {
                hgb::fit_hgb(x, &y_pos, k, p, opts.workers)
            })),
            opts.workers,
        ),
    };

    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: *kind,
        classes,
        schema: x.column_names().to_vec(),
        fit_wall_seconds: started.elapsed().as_secs_f64(),
        fit_cpu_core_count: cores,
        inner,
    })
}

impl<S: Scalar> TrainedModel<S> {
    /// One label per row, single-worker. Input columns must match the
    /// training schema by name and order.
    pub fn predict(&self, x: &FeatureView<S>) -> Result<Vec<u32>, LearnError> {
        if x.column_names() != self.schema.as_slice() {
            let missing: Vec<String> = self
                .schema
                .iter()
                .filter(|c| !x.column_names().contains(c))
                .cloned()
                .collect();
            let unexpected: Vec<String> = x
                .column_names()
                .iter()
                .filter(|c| !self.schema.contains(c))
                .cloned()
                .collect();
            return Err(LearnError::SchemaMismatch { missing, unexpected });
        }
        let labels = match &self.inner {
            ModelInner::Constant { class } => vec![*class; x.nrows()],
            ModelInner::Tree(t) => {
                x.rows().map(|r| self.classes[t.predict_pos(r) as usize]).collect()
            }
            ModelInner::Forest(f) => {
                x.rows().map(|r| self.classes[f.predict_pos(r, self.classes.len())]).collect()
            }
            ModelInner::LogReg(m) => x.rows().map(|r| self.classes[m.predict_pos(r)]).collect(),
            ModelInner::Hgb(m) => x.rows().map(|r| self.classes[m.predict_pos(r)]).collect(),
        };
        Ok(labels)
    }

    /// Training-loss trace, present for histogram gradient boosting: entry 0
    /// is the baseline-prediction loss, entry i the loss after iteration i.
    pub fn training_loss_trace(&self) -> Option<&[f64]> {
        match &self.inner {
            ModelInner::Hgb(m) => Some(&m.train_losses),
            _ => None,
        }
    }
}

#[cfg(test)]
pub(crate) mod testhelp {
    use super::*;

    /// Plain view over anonymous columns c0..cN.
    pub fn view(rows: Vec<Vec<f64>>) -> FeatureView<f64> {
        let ncols = rows.first().map_or(0, Vec::len);
        let names = (0..ncols).map(|i| format!("c{i}")).collect();
        FeatureView::from_rows(names, rows, None)
    }

    /// Two well-separated Gaussian-ish blobs, linearly separable.
    pub fn separable_blobs(n_per_class: usize, seed: u64) -> (FeatureView<f64>, Vec<u32>) {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for class in 0..2u32 {
            let center = if class == 0 { -4.0 } else { 4.0 };
            for _ in 0..n_per_class {
                let a: f64 = center + rng.random_range(-1.0..1.0);
                let b: f64 = center + rng.random_range(-1.0..1.0);
                rows.push(vec![a, b]);
                y.push(class);
            }
        }
        (view(rows), y)
    }

    pub fn training_accuracy(m: &TrainedModel<f64>, x: &FeatureView<f64>, y: &[u32]) -> f64 {
        let pred = m.predict(x).unwrap();
        let hits = pred.iter().zip(y).filter(|(a, b)| a == b).count();
        hits as f64 / y.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::testhelp::*;
    use super::*;

    #[test]
    fn every_kind_nails_a_separable_problem() {
        let (x, y) = separable_blobs(60, 5);
        for kind in [LearnerKind::dt(), LearnerKind::rf(), LearnerKind::lr(), LearnerKind::hgb()] {
            let m = fit(&kind, &x, &y, &FitOptions::default()).unwrap();
            let acc = training_accuracy(&m, &x, &y);
            assert!(acc >= 0.99, "{} reached only {acc}", kind.name());
        }
    }

    #[test]
    fn zero_rows_rejected() {
        let x = view(vec![]);
        let err = fit(&LearnerKind::dt(), &x, &[], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, LearnError::EmptyTrainingSet));
    }

    #[test]
    fn length_mismatch_rejected() {
        let x = view(vec![vec![1.0], vec![2.0]]);
        let err = fit(&LearnerKind::dt(), &x, &[0], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, LearnError::LabelLengthMismatch { x: 2, y: 1 }));
    }

    #[test]
    fn non_finite_feature_rejected_with_location() {
        let x = view(vec![vec![1.0, 2.0], vec![3.0, f64::NAN]]);
        let err = fit(&LearnerKind::lr(), &x, &[0, 1], &FitOptions::default()).unwrap_err();
        match err {
            LearnError::NonFiniteFeature { row, column } => {
                assert_eq!((row, column.as_str()), (1, "c1"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_class_needs_flag_and_yields_constant() {
        let x = view(vec![vec![1.0], vec![2.0], vec![3.0]]);
        let y = [7, 7, 7];
        let err = fit(&LearnerKind::hgb(), &x, &y, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, LearnError::SingleClass { class: 7 }));

        let opts = FitOptions { allow_single_class: true, ..FitOptions::default() };
        let m = fit(&LearnerKind::hgb(), &x, &y, &opts).unwrap();
        assert_eq!(m.classes, vec![7]);
        assert_eq!(m.predict(&x).unwrap(), vec![7, 7, 7]);
    }

    #[test]
    fn schema_mismatch_names_offending_columns() {
        let (x, y) = separable_blobs(10, 1);
        let m = fit(&LearnerKind::dt(), &x, &y, &FitOptions::default()).unwrap();
        let other = FeatureView::from_rows(
            vec!["c0".into(), "weird".into()],
            vec![vec![0.0, 0.0]],
            None,
        );
        match m.predict(&other).unwrap_err() {
            LearnError::SchemaMismatch { missing, unexpected } => {
                assert_eq!(missing, vec!["c1".to_string()]);
                assert_eq!(unexpected, vec!["weird".to_string()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn predictions_come_from_the_class_list() {
        let (x, y) = separable_blobs(25, 9);
        let y: Vec<u32> = y.iter().map(|&c| if c == 0 { 3 } else { 11 }).collect();
        for kind in [LearnerKind::dt(), LearnerKind::rf(), LearnerKind::lr(), LearnerKind::hgb()] {
            let m = fit(&kind, &x, &y, &FitOptions::default()).unwrap();
            for p in m.predict(&x).unwrap() {
                assert!(m.classes.contains(&p), "{} predicted foreign label {p}", kind.name());
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_models_exactly() {
        let (x, y) = separable_blobs(40, 2);
        for kind in [LearnerKind::dt(), LearnerKind::rf(), LearnerKind::lr(), LearnerKind::hgb()] {
            let opts = FitOptions { seed: 77, ..FitOptions::default() };
            let a = fit(&kind, &x, &y, &opts).unwrap();
            let b = fit(&kind, &x, &y, &opts).unwrap();
            assert_eq!(a.inner, b.inner, "{} not deterministic", kind.name());
            assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        }
    }

    #[test]
    fn dt_reports_one_core_others_report_pool_size() {
        let (x, y) = separable_blobs(15, 3);
        let opts = FitOptions { workers: 3, ..FitOptions::default() };
        let dt = fit(&LearnerKind::dt(), &x, &y, &opts).unwrap();
        assert_eq!(dt.fit_cpu_core_count, 1);
        let rf = fit(&LearnerKind::rf(), &x, &y, &opts).unwrap();
        assert_eq!(rf.fit_cpu_core_count, 3);
        assert!(dt.fit_wall_seconds >= 0.0 && rf.fit_wall_seconds >= 0.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (x, y) = separable_blobs(30, 8);
        for kind in [LearnerKind::rf(), LearnerKind::lr(), LearnerKind::hgb()] {
            let serial =
                fit(&kind, &x, &y, &FitOptions { seed: 5, workers: 1, ..Default::default() })
                    .unwrap();
            let pooled =
                fit(&kind, &x, &y, &FitOptions { seed: 5, workers: 4, ..Default::default() })
                    .unwrap();
            assert_eq!(serial.inner, pooled.inner, "{} varies with workers", kind.name());
        }
    }

    #[test]
    fn hyperparameter_validation_catches_nonsense() {
        assert!(LearnerKind::Hgb(HgbParams { max_bins: 256, ..Default::default() })
            .validate()
            .is_err());
        assert!(LearnerKind::Hgb(HgbParams { learning_rate: 0.0, ..Default::default() })
            .validate()
            .is_err());
        assert!(LearnerKind::Rf(RfParams { n_trees: 0, ..Default::default() })
            .validate()
            .is_err());
        assert!(LearnerKind::Lr(LrParams { tol: 0.0, ..Default::default() }).validate().is_err());
        assert!(LearnerKind::Dt(DtParams { min_samples_split: 1, ..Default::default() })
            .validate()
            .is_err());
        assert!(fit(
            &LearnerKind::Dt(DtParams { min_samples_split: 0, ..Default::default() }),
            &view(vec![vec![0.0]]),
            &[0],
            &FitOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn model_round_trips_through_serialization() {
        let (x, y) = separable_blobs(20, 4);
        let m = fit(&LearnerKind::hgb(), &x, &y, &FitOptions::default()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: TrainedModel<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.format_version, MODEL_FORMAT_VERSION);
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn argmax_resolves_ties_to_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax_lowest(&[0.2, 0.9, 0.9]), 1);
        assert_eq!(argmax_lowest(&[0.0]), 0);
    }
}
