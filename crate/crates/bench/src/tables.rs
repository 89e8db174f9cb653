//! Render stored records as the assessment's standard result tables.
//!
//! Every table shares one layout: a row per (dataset, regime, algorithm,
//! pipeline) and eight data columns, one per availability level split into
//! complete/essential sub-columns. Static cells show "mean (std)" over the
//! trial repetitions; temporal cells show the single value of the one
//! chronological split. Combinations with nothing to show stay blank.

use std::fmt::Write as _;
use std::path::PathBuf;

use flowbench_core::evaluator::{Outcome, Scenario, TrialRecord};
use flowbench_core::flowstore::FeatureSet;
use flowbench_core::pipelines::PipelineKind;
use flowbench_core::splitter::Regime;
use flowbench_core::stats::aggregate;

use crate::store::{ResultStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Closed-world detection: fpr / tpr.
    Baseline,
    /// Unknown-attack detection: fpr / tpr averaged over held-out classes.
    OpenWorld,
    /// Family labeling accuracy of the md and bmd designs.
    Multiclass,
    /// Training wall seconds.
    TrainRuntime,
    /// Inference wall seconds.
    TestRuntime,
}

impl TableKind {
    pub const ALL: [TableKind; 5] = [
        TableKind::Baseline,
        TableKind::OpenWorld,
        TableKind::Multiclass,
        TableKind::TrainRuntime,
        TableKind::TestRuntime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TableKind::Baseline => "baseline",
            TableKind::OpenWorld => "open_world",
            TableKind::Multiclass => "multiclass",
            TableKind::TrainRuntime => "train_runtime",
            TableKind::TestRuntime => "test_runtime",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

const AVAILABILITY_ORDER: [&str; 4] = ["limited", "scarce", "moderate", "abundant"];
const FEATURE_ORDER: [FeatureSet; 2] = [FeatureSet::Complete, FeatureSet::Essential];

fn algorithm_rank(name: &str) -> usize {
    match name {
        "dt" => 0,
        "rf" => 1,
        "lr" => 2,
        "hgb" => 3,
        _ => 4,
    }
}

fn availability_rank(name: &str) -> usize {
    AVAILABILITY_ORDER.iter().position(|&a| a == name).unwrap_or(AVAILABILITY_ORDER.len())
}

/// Row identity, ordered the way the tables print.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct RowKey {
    dataset: String,
    regime: Regime,
    algorithm_rank: usize,
    algorithm: String,
    pipeline: PipelineKind,
}

impl RowKey {
    fn of(r: &TrialRecord) -> RowKey {
        RowKey {
            dataset: r.factors.dataset.clone(),
            regime: r.factors.regime,
            algorithm_rank: algorithm_rank(&r.factors.algorithm),
            algorithm: r.factors.algorithm.clone(),
            pipeline: r.factors.pipeline,
        }
    }
}

/// What one record contributes to a cell.
enum Sample {
    Rates { fpr: f64, tpr: f64 },
    Value(f64),
}

fn sample_for(kind: TableKind, r: &TrialRecord) -> Option<Sample> {
    let detection = |scenario: Scenario| match (&r.outcome, r.factors.scenario == scenario) {
        (Outcome::Detection(m), true) => Some(m),
        _ => None,
    };
    match kind {
        TableKind::Baseline => {
            detection(Scenario::Closed).map(|m| Sample::Rates { fpr: m.fpr, tpr: m.tpr })
        }
        TableKind::OpenWorld => {
            detection(Scenario::Unknown).map(|m| Sample::Rates { fpr: m.fpr, tpr: m.tpr })
        }
        TableKind::Multiclass => {
            if !matches!(r.factors.pipeline, PipelineKind::Md | PipelineKind::Bmd) {
                return None;
            }
            detection(Scenario::Closed).and_then(|m| m.acc_mal).map(Sample::Value)
        }
        TableKind::TrainRuntime => {
            detection(Scenario::Closed).map(|_| Sample::Value(r.train_wall_seconds))
        }
        TableKind::TestRuntime => {
            detection(Scenario::Closed).map(|_| Sample::Value(r.infer_wall_seconds))
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let a = aggregate("cell", values).expect("cell values are finite and non-empty");
    (a.mean, a.std)
}

fn format_cell(kind: TableKind, regime: Regime, samples: &[Sample]) -> String {
    if samples.is_empty() {
        return String::new();
    }
    match kind {
        TableKind::Baseline | TableKind::OpenWorld => {
            let fprs: Vec<f64> = samples
                .iter()
                .map(|s| match s {
                    Sample::Rates { fpr, .. } => *fpr,
                    Sample::Value(_) => unreachable!("rate table holds rate samples"),
                })
                .collect();
            let tprs: Vec<f64> = samples
                .iter()
                .map(|s| match s {
                    Sample::Rates { tpr, .. } => *tpr,
                    Sample::Value(_) => unreachable!("rate table holds rate samples"),
                })
                .collect();
            match regime {
                Regime::Static => {
                    let (fm, fs) = mean_std(&fprs);
                    let (tm, ts) = mean_std(&tprs);
                    format!("{fm:.3} ({fs:.3}) / {tm:.3} ({ts:.3})")
                }
                Regime::Temporal => format!("{:.3} / {:.3}", fprs[0], tprs[0]),
            }
        }
        TableKind::Multiclass => {
            let values: Vec<f64> = samples
                .iter()
                .map(|s| match s {
                    Sample::Value(v) => *v,
                    Sample::Rates { .. } => unreachable!("value table holds value samples"),
                })
                .collect();
            match regime {
                Regime::Static => {
                    let (m, s) = mean_std(&values);
                    format!("{m:.3} ({s:.3})")
                }
                Regime::Temporal => format!("{:.3}", values[0]),
            }
        }
        TableKind::TrainRuntime | TableKind::TestRuntime => {
            let values: Vec<f64> = samples
                .iter()
                .map(|s| match s {
                    Sample::Value(v) => *v,
                    Sample::Rates { .. } => unreachable!("value table holds value samples"),
                })
                .collect();
            match regime {
                Regime::Static => {
                    let (m, s) = mean_std(&values);
                    format!("{m:.4} ({s:.4})")
                }
                Regime::Temporal => format!("{:.4}", values[0]),
            }
        }
    }
}

fn header_cells() -> Vec<String> {
    let mut cells = vec![
        "dataset".to_string(),
        "regime".to_string(),
        "algorithm".to_string(),
        "pipeline".to_string(),
    ];
    for avail in AVAILABILITY_ORDER {
        for fs in FEATURE_ORDER {
            cells.push(format!("{avail}/{fs}"));
        }
    }
    cells
}

type Grid = Vec<(RowKey, Vec<String>)>;

fn build_grid(store: &ResultStore, kind: TableKind) -> Grid {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<RowKey, BTreeMap<(usize, usize), Vec<Sample>>> = BTreeMap::new();
    for r in &store.records {
        let Some(sample) = sample_for(kind, r) else { continue };
        let avail = availability_rank(&r.factors.availability);
        let fs = FEATURE_ORDER
            .iter()
            .position(|&f| f == r.factors.feature_set)
            .expect("two feature sets exist");
        cells.entry(RowKey::of(r)).or_default().entry((avail, fs)).or_default().push(sample);
    }

    cells
        .into_iter()
        .map(|(key, mut by_col)| {
            let mut row = Vec::with_capacity(AVAILABILITY_ORDER.len() * FEATURE_ORDER.len());
            for a in 0..AVAILABILITY_ORDER.len() {
                for f in 0..FEATURE_ORDER.len() {
                    let samples = by_col.remove(&(a, f)).unwrap_or_default();
                    row.push(format_cell(kind, key.regime, &samples));
                }
            }
            (key, row)
        })
        .collect()
}

fn label_cells(key: &RowKey) -> [String; 4] {
    [
        key.dataset.clone(),
        key.regime.to_string(),
        key.algorithm.clone(),
        key.pipeline.name().to_string(),
    ]
}

/// Render one table to a string.
pub fn emit_table(store: &ResultStore, kind: TableKind, format: TableFormat) -> String {
    let grid = build_grid(store, kind);
    let header = header_cells();
    match format {
        TableFormat::Csv => {
            let mut out = String::new();
            out.push_str(&header.join(","));
            out.push('\n');
            for (key, cells) in &grid {
                let labels = label_cells(key);
                let mut fields: Vec<&str> = labels.iter().map(String::as_str).collect();
                fields.extend(cells.iter().map(String::as_str));
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}|", vec!["---"; header.len()].join("|"));
            for (key, cells) in &grid {
                let labels = label_cells(key);
                let mut fields: Vec<&str> = labels.iter().map(String::as_str).collect();
                fields.extend(cells.iter().map(String::as_str));
                let _ = writeln!(out, "| {} |", fields.join(" | "));
            }
            out
        }
    }
}

/// Render one table into the store directory as `table_<kind>.<ext>`.
pub fn write_table(
    store: &ResultStore,
    kind: TableKind,
    format: TableFormat,
) -> Result<PathBuf, StoreError> {
    let text = emit_table(store, kind, format);
    let path = store.dir().join(format!("table_{}.{}", kind.name(), format.extension()));
    std::fs::write(&path, text)
        .map_err(|e| StoreError::Io { path: path.clone(), source: e })?;
    Ok(path)
}
