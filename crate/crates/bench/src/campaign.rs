//! Campaign execution: walk the configured factor grid, train and evaluate
//! every pipeline on one shared split per trial, and persist records as each
//! trial finishes so an interrupted run loses at most its in-flight trials.
//!
//! Trials run strictly in sequence while timings are authoritative (runtime
//! tables mean nothing if runs compete for cores). Flip
//! `authoritative_timings` off to let trials run concurrently; results are
//! identical either way because every trial derives all randomness from its
//! own seed, and a single writer appends whole-trial batches so the records
//! file never interleaves.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use flowbench_core::evaluator::{
    run_adversarial, run_closed, run_unknown, EvalError, Factors, Outcome, Scenario, TrialRecord,
};
use flowbench_core::flowstore::{
    load_dataset, project, Dataset, DatasetSpec, FeatureSet, FeatureView, LoadError, SpecError,
    ViewError,
};
use flowbench_core::learners::LearnerKind;
use flowbench_core::pipelines::{
    assemble_ensemble, train_pipeline, train_specialists, PipelineError, PipelineKind,
    TrainedPipeline,
};
use flowbench_core::seeding::derive_seed;
use flowbench_core::splitter::{
    static_split, temporal_split, AvailabilityLevel, Regime, SplitError, TrialSplit,
};
use thiserror::Error;

use crate::config::{CampaignConfig, ConfigError};
use crate::hardware::{capture_hardware, HardwareError};
use crate::store::{FactorLedger, Manifest, ResultStore, StoreError, TrialKey};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Hardware(#[from] HardwareError),
    #[error("dataset spec {path:?}: {source}")]
    Spec {
        path: PathBuf,
        #[source]
        source: SpecError,
    },
    #[error("loading {path:?}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: LoadError,
    },
    #[error("two configured datasets share the name {0:?}")]
    DuplicateDataset(String),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("campaign aborted after {completed_trials} completed trials: {source}")]
    Aborted {
        completed_trials: usize,
        #[source]
        source: Box<CampaignError>,
    },
}

/// Time a deferred computation on the monotonic clock. Returns the result,
/// the wall seconds it took, and the worker count it was granted.
pub fn time_phase<T>(workers: usize, f: impl FnOnce() -> T) -> (T, f64, usize) {
    let started = Instant::now();
    let out = f();
    (out, started.elapsed().as_secs_f64(), workers)
}

#[derive(Debug)]
pub struct CampaignSummary {
    pub store_dir: PathBuf,
    pub planned_trials: usize,
    /// Trials already complete in the store when this run started.
    pub resumed_trials: usize,
    /// Trials executed by this invocation.
    pub executed_trials: usize,
    pub records: usize,
    pub skipped_records: usize,
    pub wall_seconds: f64,
    pub manifest: Manifest,
}

struct LoadedDataset {
    name: String,
    tool: String,
    has_timestamps: bool,
    data: Dataset<f64>,
    complete: FeatureView<f64>,
    essential: FeatureView<f64>,
}

impl LoadedDataset {
    fn view(&self, fs: FeatureSet) -> &FeatureView<f64> {
        match fs {
            FeatureSet::Complete => &self.complete,
            FeatureSet::Essential => &self.essential,
        }
    }
}

#[derive(Debug, Clone)]
struct PlannedTrial {
    dataset_ix: usize,
    availability: AvailabilityLevel,
    regime: Regime,
    trial: u32,
    seed: u64,
}

impl PlannedTrial {
    fn key(&self, datasets: &[LoadedDataset]) -> TrialKey {
        TrialKey {
            dataset: datasets[self.dataset_ix].name.clone(),
            availability: self.availability.name().to_string(),
            regime: self.regime,
            trial: self.trial,
        }
    }
}

fn load_datasets(config: &CampaignConfig) -> Result<Vec<LoadedDataset>, CampaignError> {
    let mut out = Vec::with_capacity(config.datasets.len());
    let mut names = BTreeSet::new();
    for dref in &config.datasets {
        let spec = DatasetSpec::load(&dref.spec)
            .map_err(|e| CampaignError::Spec { path: dref.spec.clone(), source: e })?;
        let raw = load_dataset::<f64>(&spec, &dref.data)
            .map_err(|e| CampaignError::Load { path: dref.data.clone(), source: e })?;
        let data = raw.apply_caps(derive_seed(config.master_seed, &["caps", &spec.name]));
        if !names.insert(data.spec.name.clone()) {
            return Err(CampaignError::DuplicateDataset(data.spec.name.clone()));
        }
        let complete = project(&data, FeatureSet::Complete)?;
        let essential = project(&data, FeatureSet::Essential)?;
        out.push(LoadedDataset {
            name: data.spec.name.clone(),
            tool: data.spec.netflow_tool.clone(),
            has_timestamps: data.spec.timestamp_column.is_some(),
            data,
            complete,
            essential,
        });
    }
    Ok(out)
}

fn build_plan(config: &CampaignConfig, datasets: &[LoadedDataset]) -> Vec<PlannedTrial> {
    let mut plan = Vec::new();
    for (dataset_ix, ld) in datasets.iter().enumerate() {
        for &availability in &config.availabilities {
            for &regime in &config.regimes {
                let reps = config.repetitions_for(&availability, regime);
                for trial in 0..reps {
                    let seed = derive_seed(
                        config.master_seed,
                        &[
                            "trial",
                            &ld.name,
                            availability.name(),
                            &regime.to_string(),
                            &trial.to_string(),
                        ],
                    );
                    plan.push(PlannedTrial { dataset_ix, availability, regime, trial, seed });
                }
            }
        }
    }
    plan
}

fn skip_record(factors: Factors, lk: &LearnerKind, reason: &str, split_id: u64) -> TrialRecord {
    TrialRecord {
        factors,
        hyperparams: *lk,
        outcome: Outcome::Skipped { reason: reason.to_string() },
        train_wall_seconds: 0.0,
        infer_wall_seconds: 0.0,
        fit_workers: 0,
        infer_workers: 0,
        split_id,
    }
}

/// Execute one trial: one split, every (algorithm x feature set x pipeline x
/// scenario) cell. Cells a scenario cannot apply to become skip records, so
/// every trial contributes the same number of records.
fn run_trial(
    config: &CampaignConfig,
    datasets: &[LoadedDataset],
    t: &PlannedTrial,
    fit_workers: usize,
) -> Result<Vec<TrialRecord>, CampaignError> {
    let ld = &datasets[t.dataset_ix];
    let factors = |lk: &LearnerKind, kind: PipelineKind, fs: FeatureSet, scenario: Scenario| Factors {
        dataset: ld.name.clone(),
        algorithm: lk.name().to_string(),
        pipeline: kind,
        availability: t.availability.name().to_string(),
        feature_set: fs,
        regime: t.regime,
        scenario,
        trial: t.trial,
        seed: t.seed,
    };

    let split: Option<TrialSplit> = match t.regime {
        Regime::Temporal if !ld.has_timestamps => None,
        Regime::Static => Some(static_split(&ld.data, t.availability, t.seed)?),
        Regime::Temporal => Some(temporal_split(&ld.data, t.availability)?),
    };

    let mut records = Vec::new();
    let Some(split) = split else {
        for lk in &config.algorithms {
            for &fs in &config.feature_sets {
                for &kind in &config.pipelines {
                    for &scenario in &config.scenarios {
                        records.push(skip_record(
                            factors(lk, kind, fs, scenario),
                            lk,
                            "temporal regime unsupported: the dataset has no timestamps",
                            0,
                        ));
                    }
                }
            }
        }
        return Ok(records);
    };

    let want_closed = config.scenarios.contains(&Scenario::Closed);
    let want_adversarial = config.scenarios.contains(&Scenario::Adversarial);

    for lk in &config.algorithms {
        for &fs in &config.feature_sets {
            let view = ld.view(fs);

            // Closed runs need every selected design trained; adversarial
            // runs reuse those models on the essential set (all but the
            // redundant-average design, which has no decision rule to
            // attack). Anything else trains inside its own scenario.
            let to_train: Vec<PipelineKind> = config
                .pipelines
                .iter()
                .copied()
                .filter(|&kind| {
                    want_closed
                        || (want_adversarial
                            && fs == FeatureSet::Essential
                            && kind != PipelineKind::EdR)
                })
                .collect();
            let mut trained: BTreeMap<PipelineKind, TrainedPipeline<f64>> = BTreeMap::new();
            if !to_train.is_empty() {
                let set = if to_train.iter().any(|k| k.is_ensemble()) {
                    Some(train_specialists(lk, &split, view, fit_workers)?)
                } else {
                    None
                };
                for &kind in &to_train {
                    let p = if kind.is_ensemble() {
                        assemble_ensemble(
                            kind,
                            lk,
                            set.as_ref().expect("specialists trained above"),
                            &split,
                            view,
                            fit_workers,
                        )?
                    } else {
                        train_pipeline(kind, lk, &split, view, fit_workers)?
                    };
                    trained.insert(kind, p);
                }
            }

            for &kind in &config.pipelines {
                for &scenario in &config.scenarios {
                    let f = factors(lk, kind, fs, scenario);
                    let record = match scenario {
                        Scenario::Closed => run_closed(&trained[&kind], &split, view, f)?,
                        Scenario::Unknown => {
                            if fs != FeatureSet::Complete {
                                skip_record(
                                    f,
                                    lk,
                                    "the unknown-attack scenario runs on the complete \
                                     feature set only",
                                    split.id(),
                                )
                            } else if kind == PipelineKind::EdR {
                                skip_record(
                                    f,
                                    lk,
                                    "the redundant-average design has no single detection \
                                     rule to confront with held-out attacks",
                                    split.id(),
                                )
                            } else {
                                match run_unknown(kind, lk, &split, view, fit_workers, f.clone()) {
                                    Ok(r) => r,
                                    Err(EvalError::UnknownUndefined { available }) => skip_record(
                                        f,
                                        lk,
                                        &format!(
                                            "holding one attack out needs at least two attack \
                                             classes in training; this split has {available}"
                                        ),
                                        split.id(),
                                    ),
                                    Err(e) => return Err(e.into()),
                                }
                            }
                        }
                        Scenario::Adversarial => {
                            if fs != FeatureSet::Essential {
                                skip_record(
                                    f,
                                    lk,
                                    "the evasion model rewrites only the compact features an \
                                     attacker controls; it runs on the essential set",
                                    split.id(),
                                )
                            } else if kind == PipelineKind::EdR {
                                skip_record(
                                    f,
                                    lk,
                                    "the redundant-average design has no deployable decision \
                                     rule to evade",
                                    split.id(),
                                )
                            } else {
                                run_adversarial(
                                    &trained[&kind],
                                    &ld.data,
                                    &split,
                                    &config.perturbation,
                                    f,
                                )?
                            }
                        }
                    };
                    records.push(record);
                }
            }
        }
    }
    Ok(records)
}

/// Run (or resume) a campaign. Every completed trial is durable before the
/// next starts; on error the count of completed trials is reported so the
/// run can be resumed after the cause is fixed.
pub fn run_campaign(
    config: &CampaignConfig,
    resume: Option<&Path>,
) -> Result<CampaignSummary, CampaignError> {
    let started = Instant::now();
    config.validate()?;
    let snapshot = config.snapshot();
    let datasets = load_datasets(config)?;

    let mut store = match resume {
        None => {
            let hardware = capture_hardware(&config.hardware)?;
            let ledger = FactorLedger::new(hardware, config.master_seed, config.repetitions);
            ResultStore::create(&config.output_dir, &snapshot, ledger)?
        }
        Some(dir) => {
            let mut store = ResultStore::open(dir)?;
            if store.config_snapshot != snapshot {
                return Err(StoreError::ConfigMismatch.into());
            }
            let expected = config.algorithms.len()
                * config.feature_sets.len()
                * config.pipelines.len()
                * config.scenarios.len();
            let keep: BTreeSet<TrialKey> = store
                .trial_counts()
                .into_iter()
                .filter(|&(_, n)| n == expected)
                .map(|(k, _)| k)
                .collect();
            store.retain_trials(&keep)?;
            store
        }
    };

    let plan = build_plan(config, &datasets);
    let done: BTreeSet<TrialKey> = store.trial_counts().into_keys().collect();
    let resumed_trials = done.len();
    let pending: Vec<&PlannedTrial> =
        plan.iter().filter(|t| !done.contains(&t.key(&datasets))).collect();

    let mut executed = 0usize;
    let abort = |executed: usize, source: CampaignError| CampaignError::Aborted {
        completed_trials: resumed_trials + executed,
        source: Box::new(source),
    };

    if config.authoritative_timings {
        // Exclusive access to the machine: every fit gets the whole pool.
        for &t in &pending {
            let batch = run_trial(config, &datasets, t, config.worker_pool_size)
                .map_err(|e| abort(executed, e))?;
            persist(&mut store, &datasets[t.dataset_ix].tool, batch)
                .map_err(|e| abort(executed, e))?;
            executed += 1;
        }
    } else {
        // Timings are advisory: run whole trials concurrently, one worker
        // per trial, and funnel finished batches through this thread.
        let threads = config.worker_pool_size.max(1);
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<Vec<TrialRecord>, CampaignError>)>(threads);
        let mut first_error: Option<CampaignError> = None;

        std::thread::scope(|scope| {
            for _ in 0..threads {
                let tx = tx.clone();
                let pending = &pending;
                let datasets = &datasets;
                let next = &next;
                let stop = &stop;
                scope.spawn(move || loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= pending.len() {
                        break;
                    }
                    let out = run_trial(config, datasets, pending[i], 1);
                    if out.is_err() {
                        stop.store(true, Ordering::Relaxed);
                    }
                    if tx.send((i, out)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            for (i, out) in rx {
                match out {
                    Ok(batch) => {
                        let tool = &datasets[pending[i].dataset_ix].tool;
                        match persist(&mut store, tool, batch) {
                            Ok(()) => executed += 1,
                            Err(e) => {
                                stop.store(true, Ordering::Relaxed);
                                first_error.get_or_insert(e);
                            }
                        }
                    }
                    Err(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
        });

        if let Some(e) = first_error {
            return Err(abort(executed, e));
        }
    }

    let manifest = store.finalize()?;
    let skipped_records = store
        .records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Skipped { .. }))
        .count();
    Ok(CampaignSummary {
        store_dir: store.dir().to_path_buf(),
        planned_trials: plan.len(),
        resumed_trials,
        executed_trials: executed,
        records: store.records.len(),
        skipped_records,
        wall_seconds: started.elapsed().as_secs_f64(),
        manifest,
    })
}

fn persist(
    store: &mut ResultStore,
    tool: &str,
    batch: Vec<TrialRecord>,
) -> Result<(), CampaignError> {
    for r in &batch {
        store.ledger.link(&r.factors, tool);
    }
    store.write_ledger()?;
    store.append(batch)?;
    Ok(())
}
