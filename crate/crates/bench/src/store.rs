//! Durable campaign output. One directory holds four files: the records as
//! newline-delimited JSON (one line per scenario run, appended as trials
//! finish), the exact configuration the campaign ran under, the factor
//! ledger, and a manifest carrying a content hash over everything that is
//! supposed to reproduce.
//!
//! The hash deliberately excludes wall-clock fields: two runs of the same
//! configuration and seed must hash identically even though no two machines
//! time alike.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use flowbench_core::evaluator::{Factors, Outcome, TrialRecord};
use flowbench_core::flowstore::FeatureSet;
use flowbench_core::pipelines::PipelineKind;
use flowbench_core::splitter::Regime;
use flowbench_core::stats::{welch, StatsError, TestResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Repetitions;
use crate::hardware::HardwareDescriptor;

pub const RECORDS_FILE: &str = "records.ndjson";
pub const CONFIG_FILE: &str = "config.toml";
pub const LEDGER_FILE: &str = "ledger.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line} is corrupt: {source}")]
    CorruptRecord {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    CorruptFile {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(
        "output directory {0:?} already holds campaign records; pass it via --resume to \
         continue that run, or point this run at a fresh directory"
    )]
    NotEmpty(PathBuf),
    #[error("store at {0:?} has no configuration snapshot; it is not a campaign directory")]
    MissingSnapshot(PathBuf),
    #[error(
        "the store was produced under a different configuration; resuming would mix \
         incompatible runs"
    )]
    ConfigMismatch,
    #[error("selector {text:?}: {why}")]
    BadSelector { text: String, why: String },
    #[error("selector {0:?} matches no records")]
    EmptySelection(String),
    #[error(
        "selector {selector:?} matches {count} records for trial seed {seed}; narrow it so \
         every trial contributes exactly one sample"
    )]
    Ambiguous { selector: String, seed: u64, count: usize },
    #[error(
        "fairness violation: the selections cover different trial sets ({a} vs {b} trials), \
         so their samples are not drawn from matched splits"
    )]
    TrialSetMismatch { a: usize, b: usize },
    #[error("a selected record does not carry metric {metric}: {why}")]
    MetricUnavailable { metric: &'static str, why: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io { path: path.to_path_buf(), source }
}

/// One controlled-factor combination: platform (exporter tool + feature
/// set), data (dataset + availability), system (pipeline + learner).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub netflow_tool: String,
    pub feature_set: FeatureSet,
    pub dataset: String,
    pub availability: String,
    pub pipeline: PipelineKind,
    pub algorithm: String,
}

impl LedgerEntry {
    fn covers(&self, f: &Factors) -> bool {
        self.feature_set == f.feature_set
            && self.dataset == f.dataset
            && self.availability == f.availability
            && self.pipeline == f.pipeline
            && self.algorithm == f.algorithm
    }
}

/// Uncertainty-control factors: one master seed, one repetition schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedingEntry {
    pub master_seed: u64,
    pub repetitions: Repetitions,
}

/// Record of every factor the campaign held fixed. Each result record links
/// to exactly one entry (plus the shared hardware and seeding blocks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLedger {
    pub hardware: HardwareDescriptor,
    pub seeding: SeedingEntry,
    pub entries: BTreeMap<String, LedgerEntry>,
}

/// Stable ledger key for a record's factor combination.
pub fn entry_key(f: &Factors, tool: &str) -> String {
    format!(
        "{}/{}|{}/{}|{}/{}",
        tool,
        f.feature_set,
        f.dataset,
        f.availability,
        f.pipeline.name(),
        f.algorithm
    )
}

impl FactorLedger {
    pub fn new(hardware: HardwareDescriptor, master_seed: u64, repetitions: Repetitions) -> Self {
        FactorLedger {
            hardware,
            seeding: SeedingEntry { master_seed, repetitions },
            entries: BTreeMap::new(),
        }
    }

    /// Ensure the entry for this factor combination exists; returns its key.
    pub fn link(&mut self, f: &Factors, tool: &str) -> String {
        let key = entry_key(f, tool);
        self.entries.entry(key.clone()).or_insert_with(|| LedgerEntry {
            netflow_tool: tool.to_string(),
            feature_set: f.feature_set,
            dataset: f.dataset.clone(),
            availability: f.availability.clone(),
            pipeline: f.pipeline,
            algorithm: f.algorithm.clone(),
        });
        key
    }

    /// The unique entry covering a record's factors, if exactly one exists.
    pub fn entry_for(&self, f: &Factors) -> Option<(&str, &LedgerEntry)> {
        let mut hits = self.entries.iter().filter(|(_, e)| e.covers(f));
        let first = hits.next()?;
        if hits.next().is_some() {
            return None;
        }
        Some((first.0.as_str(), first.1))
    }
}

/// Trial identity within a store: one split, many records.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrialKey {
    pub dataset: String,
    pub availability: String,
    pub regime: Regime,
    pub trial: u32,
}

impl TrialKey {
    pub fn of(r: &TrialRecord) -> TrialKey {
        TrialKey {
            dataset: r.factors.dataset.clone(),
            availability: r.factors.availability.clone(),
            regime: r.factors.regime,
            trial: r.factors.trial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub content_hash: String,
    pub record_count: usize,
}

#[derive(Debug)]
pub struct ResultStore {
    dir: PathBuf,
    pub records: Vec<TrialRecord>,
    pub ledger: FactorLedger,
    pub config_snapshot: String,
}

impl ResultStore {
    /// Start a fresh store. Refuses a directory that already holds records,
    /// so an accidental rerun cannot silently mix two campaigns.
    pub fn create(dir: &Path, config_snapshot: &str, ledger: FactorLedger) -> Result<ResultStore, StoreError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let records_path = dir.join(RECORDS_FILE);
        if records_path.exists() {
            return Err(StoreError::NotEmpty(dir.to_path_buf()));
        }
        let config_path = dir.join(CONFIG_FILE);
        fs::write(&config_path, config_snapshot).map_err(|e| io_err(&config_path, e))?;
        let store = ResultStore {
            dir: dir.to_path_buf(),
            records: Vec::new(),
            ledger,
            config_snapshot: config_snapshot.to_string(),
        };
        store.write_ledger()?;
        fs::write(&records_path, "").map_err(|e| io_err(&records_path, e))?;
        Ok(store)
    }

    /// Load an existing store. A half-written final record line (the mark of
    /// a crash mid-append) is dropped; corruption anywhere else is an error.
    pub fn open(dir: &Path) -> Result<ResultStore, StoreError> {
        let config_path = dir.join(CONFIG_FILE);
        if !config_path.exists() {
            return Err(StoreError::MissingSnapshot(dir.to_path_buf()));
        }
        let config_snapshot = fs::read_to_string(&config_path).map_err(|e| io_err(&config_path, e))?;

        let ledger_path = dir.join(LEDGER_FILE);
        let ledger_text = fs::read_to_string(&ledger_path).map_err(|e| io_err(&ledger_path, e))?;
        let ledger = serde_json::from_str(&ledger_text)
            .map_err(|e| StoreError::CorruptFile { path: ledger_path, source: e })?;

        let records_path = dir.join(RECORDS_FILE);
        let text = fs::read_to_string(&records_path).map_err(|e| io_err(&records_path, e))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut records = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str::<TrialRecord>(line) {
                Ok(r) => records.push(r),
                Err(e) if i + 1 == lines.len() => {
                    // Interrupted write; the trial it belonged to will be
                    // dropped as incomplete on resume.
                    let _ = e;
                }
                Err(e) => {
                    return Err(StoreError::CorruptRecord {
                        path: records_path,
                        line: i + 1,
                        source: e,
                    })
                }
            }
        }

        Ok(ResultStore { dir: dir.to_path_buf(), records, ledger, config_snapshot })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Append a finished batch of records to disk and memory.
    pub fn append(&mut self, batch: Vec<TrialRecord>) -> Result<(), StoreError> {
        let path = self.dir.join(RECORDS_FILE);
        let mut file = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut buf = String::new();
        for r in &batch {
            buf.push_str(&serde_json::to_string(r).expect("record serializes"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes()).map_err(|e| io_err(&path, e))?;
        self.records.extend(batch);
        Ok(())
    }

    /// Persist the ledger (entries accrete as the campaign discovers factor
    /// combinations).
    pub fn write_ledger(&self) -> Result<(), StoreError> {
        let path = self.dir.join(LEDGER_FILE);
        let text = serde_json::to_string_pretty(&self.ledger).expect("ledger serializes");
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    /// Record count per trial, for resume bookkeeping.
    pub fn trial_counts(&self) -> BTreeMap<TrialKey, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(TrialKey::of(r)).or_insert(0) += 1;
        }
        out
    }

    /// Keep only the listed trials, rewriting the records file atomically.
    /// Returns how many records were dropped.
    pub fn retain_trials(&mut self, keep: &BTreeSet<TrialKey>) -> Result<usize, StoreError> {
        let before = self.records.len();
        self.records.retain(|r| keep.contains(&TrialKey::of(r)));
        let dropped = before - self.records.len();
        if dropped > 0 {
            self.rewrite_records()?;
        }
        Ok(dropped)
    }

    fn rewrite_records(&self) -> Result<(), StoreError> {
        let path = self.dir.join(RECORDS_FILE);
        let tmp = self.dir.join(format!("{RECORDS_FILE}.tmp"));
        let mut buf = String::new();
        for r in &self.records {
            buf.push_str(&serde_json::to_string(r).expect("record serializes"));
            buf.push('\n');
        }
        fs::write(&tmp, buf).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }

    /// Hash of everything the campaign is supposed to reproduce: records in
    /// factor order with wall-clock fields zeroed. Hex SHA-256.
    pub fn content_hash(&self) -> String {
        let mut sorted: Vec<TrialRecord> = self.records.clone();
        sorted.sort_by_cached_key(record_order);
        let mut hasher = Sha256::new();
        for mut r in sorted {
            r.train_wall_seconds = 0.0;
            r.infer_wall_seconds = 0.0;
            hasher.update(serde_json::to_string(&r).expect("record serializes").as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Write the manifest; call once the campaign (or a resume leg) is done.
    pub fn finalize(&self) -> Result<Manifest, StoreError> {
        let manifest =
            Manifest { content_hash: self.content_hash(), record_count: self.records.len() };
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> Result<Option<Manifest>, StoreError> {
        let path = self.dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let m = serde_json::from_str(&text)
            .map_err(|e| StoreError::CorruptFile { path, source: e })?;
        Ok(Some(m))
    }
}

fn record_order(r: &TrialRecord) -> String {
    format!(
        "{}|{}|{}|{:010}|{}|{}|{}|{}",
        r.factors.dataset,
        r.factors.availability,
        r.factors.regime,
        r.factors.trial,
        r.factors.algorithm,
        r.factors.feature_set,
        r.factors.pipeline.name(),
        r.factors.scenario.name()
    )
}

/// Field filter over record factors, parsed from `field=value` pairs
/// separated by commas.
#[derive(Debug, Clone, Default)]
pub struct Selector {
    pub text: String,
    dataset: Option<String>,
    algorithm: Option<String>,
    pipeline: Option<PipelineKind>,
    availability: Option<String>,
    feature_set: Option<FeatureSet>,
    regime: Option<Regime>,
    scenario: Option<flowbench_core::evaluator::Scenario>,
}

impl Selector {
    pub fn parse(text: &str) -> Result<Selector, StoreError> {
        let bad = |why: String| StoreError::BadSelector { text: text.to_string(), why };
        let mut s = Selector { text: text.to_string(), ..Selector::default() };
        for part in text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected field=value, got {part:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "dataset" => s.dataset = Some(v.to_string()),
                "algorithm" => s.algorithm = Some(v.to_string()),
                "availability" => s.availability = Some(v.to_string()),
                "pipeline" => {
                    s.pipeline = Some(
                        *PipelineKind::ALL
                            .iter()
                            .find(|p| p.name() == v)
                            .ok_or_else(|| bad(format!("unknown pipeline {v:?}")))?,
                    )
                }
                "feature_set" => {
                    s.feature_set = Some(match v.to_lowercase().as_str() {
                        "complete" => FeatureSet::Complete,
                        "essential" => FeatureSet::Essential,
                        _ => return Err(bad(format!("unknown feature set {v:?}"))),
                    })
                }
                "regime" => {
                    s.regime = Some(match v {
                        "static" => Regime::Static,
                        "temporal" => Regime::Temporal,
                        _ => return Err(bad(format!("unknown regime {v:?}"))),
                    })
                }
                "scenario" => {
                    use flowbench_core::evaluator::Scenario;
                    s.scenario = Some(match v {
                        "closed" => Scenario::Closed,
                        "unknown" => Scenario::Unknown,
                        "adversarial" => Scenario::Adversarial,
                        _ => return Err(bad(format!("unknown scenario {v:?}"))),
                    })
                }
                _ => {
                    return Err(bad(format!(
                        "unknown field {k:?} (expected dataset, algorithm, pipeline, \
                         availability, feature_set, regime, or scenario)"
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn matches(&self, f: &Factors) -> bool {
        self.dataset.as_deref().is_none_or(|v| v == f.dataset)
            && self.algorithm.as_deref().is_none_or(|v| v == f.algorithm)
            && self.pipeline.is_none_or(|v| v == f.pipeline)
            && self.availability.as_deref().is_none_or(|v| v == f.availability)
            && self.feature_set.is_none_or(|v| v == f.feature_set)
            && self.regime.is_none_or(|v| v == f.regime)
            && self.scenario.is_none_or(|v| v == f.scenario)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Tpr,
    Fpr,
    Acc,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Tpr => "tpr",
            Metric::Fpr => "fpr",
            Metric::Acc => "acc",
        }
    }
}

fn extract(metric: Metric, outcome: &Outcome) -> Result<f64, StoreError> {
    let unavailable = |why: String| StoreError::MetricUnavailable { metric: metric.name(), why };
    match outcome {
        Outcome::Detection(m) => match metric {
            Metric::Tpr if m.undefined_tpr => {
                Err(unavailable("no malicious rows in the evaluation set".to_string()))
            }
            Metric::Tpr => Ok(m.tpr),
            Metric::Fpr if m.undefined_fpr => {
                Err(unavailable("no benign rows in the evaluation set".to_string()))
            }
            Metric::Fpr => Ok(m.fpr),
            Metric::Acc => m
                .acc_mal
                .ok_or_else(|| unavailable("the pipeline does not label families".to_string())),
        },
        Outcome::Adversarial(a) => match metric {
            // The adversarial scenario records a before/after detection-rate
            // pair; its comparable headline number is the after rate.
            Metric::Tpr => Ok(a.tpr_adv),
            _ => Err(unavailable("adversarial runs record detection rates only".to_string())),
        },
        Outcome::Skipped { reason } => Err(unavailable(format!("the run was skipped: {reason}"))),
    }
}

/// Welch comparison of one metric between two record selections, paired by
/// trial seed so both sides draw from the same splits.
pub fn compare_methods(
    store: &ResultStore,
    key_a: &Selector,
    key_b: &Selector,
    metric: Metric,
    alpha: f64,
) -> Result<TestResult, StoreError> {
    let a = collect(store, key_a, metric)?;
    let b = collect(store, key_b, metric)?;
    if a.keys().ne(b.keys()) {
        return Err(StoreError::TrialSetMismatch { a: a.len(), b: b.len() });
    }
    let va: Vec<f64> = a.values().copied().collect();
    let vb: Vec<f64> = b.values().copied().collect();
    Ok(welch(&va, &vb, alpha)?)
}

fn collect(
    store: &ResultStore,
    selector: &Selector,
    metric: Metric,
) -> Result<BTreeMap<u64, f64>, StoreError> {
    let mut out = BTreeMap::new();
    for r in store.records.iter().filter(|r| selector.matches(&r.factors)) {
        let v = extract(metric, &r.outcome)?;
        if out.insert(r.factors.seed, v).is_some() {
            return Err(StoreError::Ambiguous {
                selector: selector.text.clone(),
                seed: r.factors.seed,
                count: 2,
            });
        }
    }
    if out.is_empty() {
        return Err(StoreError::EmptySelection(selector.text.clone()));
    }
    Ok(out)
}
