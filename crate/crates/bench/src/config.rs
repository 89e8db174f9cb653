//! Campaign configuration: which cells of the assessment grid to run, how
//! many times, and under which seeds.
//!
//! The file format is TOML. Selection lists take the short names used
//! everywhere else (`"hgb"`, `"bd"`, `"abundant"`, `"complete"`, `"static"`,
//! `"closed"`); algorithms and availabilities also accept inline tables when
//! hyperparameters or the scarce fraction need overriding.

use std::path::{Path, PathBuf};

use flowbench_core::evaluator::Scenario;
use flowbench_core::flowstore::FeatureSet;
use flowbench_core::learners::LearnerKind;
use flowbench_core::pipelines::PipelineKind;
use flowbench_core::splitter::{AvailabilityKind, AvailabilityLevel, Regime, SplitError};
use flowbench_core::threats::{PerturbationRule, ThreatError};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::hardware::HardwareOverrides;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("selection list {0:?} is empty; every axis needs at least one entry")]
    EmptySelection(&'static str),
    #[error("selection list {list:?} repeats {name:?}")]
    Duplicate { list: &'static str, name: String },
    #[error("repetitions.{which} is {got}; every cell runs at least once")]
    ZeroRepetitions { which: &'static str, got: u32 },
    #[error("repetitions.temporal is {0}; the temporal regime has exactly one split, so it runs exactly once")]
    TemporalRepetitions(u32),
    #[error("unknown repetition preset {0:?}; known presets: paper, sweet-spot")]
    UnknownPreset(String),
    #[error("worker_pool_size must be at least 1")]
    NoWorkers,
    #[error("perturbation rule invalid: {0}")]
    Threat(#[from] ThreatError),
    #[error("availability entry invalid: {0}")]
    Split(#[from] SplitError),
    #[error(
        "availability {0:?} carries a non-standard fraction; only scarce is \
         tunable, via {{ kind = \"scarce\", fraction = ... }}"
    )]
    NonCanonicalAvailability(String),
    #[error("algorithm entry invalid: {0}")]
    Learn(#[from] flowbench_core::learners::LearnError),
}

/// One dataset the campaign runs over: its specification file and the CSV
/// capture it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub spec: PathBuf,
    pub data: PathBuf,
}

/// How many trials each availability level gets. The temporal regime always
/// runs once per cell regardless of these numbers: its split is
/// deterministic, so repetition would measure nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Repetitions {
    pub limited: u32,
    pub standard: u32,
    pub temporal: u32,
}

impl Default for Repetitions {
    fn default() -> Self {
        Repetitions { limited: 1000, standard: 100, temporal: 1 }
    }
}

impl Repetitions {
    /// The reduced schedule recommended for routine assessments: 10x10 draws
    /// of (E, T) where small training sets make results noisy, 3x3 where
    /// they do not.
    pub fn sweet_spot() -> Repetitions {
        Repetitions { limited: 100, standard: 9, temporal: 1 }
    }
}

/// Accepts `{ preset = "sweet-spot", standard = 12 }`: explicit numbers win
/// over the preset they refine.
impl<'de> Deserialize<'de> for Repetitions {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            preset: Option<String>,
            limited: Option<u32>,
            standard: Option<u32>,
            temporal: Option<u32>,
        }
        let raw = Raw::deserialize(de)?;
        let mut base = match raw.preset.as_deref() {
            None | Some("paper") => Repetitions::default(),
            Some("sweet-spot") => Repetitions::sweet_spot(),
            Some(other) => {
                return Err(D::Error::custom(ConfigError::UnknownPreset(other.to_string())))
            }
        };
        if let Some(v) = raw.limited {
            base.limited = v;
        }
        if let Some(v) = raw.standard {
            base.standard = v;
        }
        if let Some(v) = raw.temporal {
            base.temporal = v;
        }
        Ok(base)
    }
}

fn de_learners<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<LearnerKind>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Sel {
        Name(String),
        Full(LearnerKind),
    }
    Vec::<Sel>::deserialize(de)?
        .into_iter()
        .map(|s| match s {
            Sel::Full(k) => Ok(k),
            Sel::Name(n) => match n.as_str() {
                "dt" => Ok(LearnerKind::dt()),
                "rf" => Ok(LearnerKind::rf()),
                "lr" => Ok(LearnerKind::lr()),
                "hgb" => Ok(LearnerKind::hgb()),
                other => Err(D::Error::custom(format!(
                    "unknown algorithm {other:?}; known: dt, rf, lr, hgb"
                ))),
            },
        })
        .collect()
}

fn de_availabilities<'de, D: Deserializer<'de>>(
    de: D,
) -> Result<Vec<AvailabilityLevel>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Sel {
        // Full form as written by snapshot(); validated in validate().
        Full(AvailabilityLevel),
        Custom { kind: String, fraction: f64 },
        Name(String),
    }
    Vec::<Sel>::deserialize(de)?
        .into_iter()
        .map(|s| match s {
            Sel::Full(a) => Ok(a),
            Sel::Name(n) => by_name::<D>(&n),
            Sel::Custom { kind, fraction } => {
                if kind == "scarce" {
                    AvailabilityLevel::scarce_with(fraction).map_err(D::Error::custom)
                } else {
                    Err(D::Error::custom(format!(
                        "only the scarce level takes a fraction; got kind {kind:?}"
                    )))
                }
            }
        })
        .collect()
}

fn by_name<'de, D: Deserializer<'de>>(n: &str) -> Result<AvailabilityLevel, D::Error> {
    match n {
        "limited" => Ok(AvailabilityLevel::limited()),
        "scarce" => Ok(AvailabilityLevel::scarce()),
        "moderate" => Ok(AvailabilityLevel::moderate()),
        "abundant" => Ok(AvailabilityLevel::abundant()),
        other => Err(D::Error::custom(format!(
            "unknown availability {other:?}; known: limited, scarce, moderate, abundant"
        ))),
    }
}

fn de_feature_sets<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<FeatureSet>, D::Error> {
    Vec::<String>::deserialize(de)?
        .into_iter()
        .map(|s| match s.to_lowercase().as_str() {
            "complete" => Ok(FeatureSet::Complete),
            "essential" => Ok(FeatureSet::Essential),
            other => Err(D::Error::custom(format!(
                "unknown feature set {other:?}; known: complete, essential"
            ))),
        })
        .collect()
}

fn default_workers() -> usize {
    1
}

fn default_authoritative() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub datasets: Vec<DatasetRef>,
    #[serde(deserialize_with = "de_learners")]
    pub algorithms: Vec<LearnerKind>,
    pub pipelines: Vec<PipelineKind>,
    #[serde(deserialize_with = "de_availabilities")]
    pub availabilities: Vec<AvailabilityLevel>,
    #[serde(deserialize_with = "de_feature_sets")]
    pub feature_sets: Vec<FeatureSet>,
    pub regimes: Vec<Regime>,
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub repetitions: Repetitions,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub worker_pool_size: usize,
    /// When true (the default) trials run one at a time with the worker pool
    /// to themselves, so recorded runtimes are citable. When false trials may
    /// overlap and the runtimes are indicative only.
    #[serde(default = "default_authoritative")]
    pub authoritative_timings: bool,
    #[serde(default)]
    pub perturbation: PerturbationRule,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub hardware: HardwareOverrides,
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<CampaignConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        CampaignConfig::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<CampaignConfig, ConfigError> {
        let cfg: CampaignConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check<T>(
            list: &'static str,
            items: &[T],
            name: impl Fn(&T) -> String,
        ) -> Result<(), ConfigError> {
            if items.is_empty() {
                return Err(ConfigError::EmptySelection(list));
            }
            let mut seen = Vec::new();
            for it in items {
                let n = name(it);
                if seen.contains(&n) {
                    return Err(ConfigError::Duplicate { list, name: n });
                }
                seen.push(n);
            }
            Ok(())
        }
        check("datasets", &self.datasets, |d| d.spec.display().to_string())?;
        check("algorithms", &self.algorithms, |a| a.name().to_string())?;
        check("pipelines", &self.pipelines, |p| p.name().to_string())?;
        check("availabilities", &self.availabilities, |a| a.name().to_string())?;
        check("feature_sets", &self.feature_sets, |f| f.to_string())?;
        check("regimes", &self.regimes, |r| r.to_string())?;
        check("scenarios", &self.scenarios, |s| s.name().to_string())?;

        for (which, got) in [
            ("limited", self.repetitions.limited),
            ("standard", self.repetitions.standard),
            ("temporal", self.repetitions.temporal),
        ] {
            if got == 0 {
                return Err(ConfigError::ZeroRepetitions { which, got });
            }
        }
        if self.repetitions.temporal != 1 {
            return Err(ConfigError::TemporalRepetitions(self.repetitions.temporal));
        }
        if self.worker_pool_size == 0 {
            return Err(ConfigError::NoWorkers);
        }
        for lk in &self.algorithms {
            lk.validate()?;
        }
        for a in &self.availabilities {
            match a.kind {
                AvailabilityKind::Scarce => {
                    AvailabilityLevel::scarce_with(a.train_fraction)?;
                }
                _ => {
                    let canonical = match a.kind {
                        AvailabilityKind::Limited => AvailabilityLevel::limited(),
                        AvailabilityKind::Moderate => AvailabilityLevel::moderate(),
                        AvailabilityKind::Abundant => AvailabilityLevel::abundant(),
                        AvailabilityKind::Scarce => unreachable!(),
                    };
                    if a.train_fraction != canonical.train_fraction {
                        return Err(ConfigError::NonCanonicalAvailability(
                            a.name().to_string(),
                        ));
                    }
                }
            }
        }
        if self.scenarios.contains(&Scenario::Adversarial) {
            self.perturbation.validate()?;
        }
        Ok(())
    }

    /// Trials for one (availability, regime) cell.
    pub fn repetitions_for(&self, a: &AvailabilityLevel, regime: Regime) -> u32 {
        if regime == Regime::Temporal {
            self.repetitions.temporal
        } else if a.kind == AvailabilityKind::Limited {
            self.repetitions.limited
        } else {
            self.repetitions.standard
        }
    }

    /// Canonical text form; the store snapshots this for audit and resume
    /// comparison, so it reflects the effective config, overrides included.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"
            master_seed = 7
            output_dir = "out"
            algorithms = ["dt", "hgb"]
            pipelines = ["bd", "md"]
            availabilities = ["limited", "abundant"]
            feature_sets = ["complete"]
            regimes = ["static"]
            scenarios = ["closed"]

            [[datasets]]
            spec = "specs/a.toml"
            data = "data/a.csv"
        "#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = CampaignConfig::from_toml(&minimal()).unwrap();
        assert_eq!(cfg.repetitions, Repetitions { limited: 1000, standard: 100, temporal: 1 });
        assert_eq!(cfg.worker_pool_size, 1);
        assert!(cfg.authoritative_timings);
        assert_eq!(cfg.algorithms[1], LearnerKind::hgb());
        assert_eq!(cfg.availabilities[1].name(), "abundant");
    }

    #[test]
    fn sweet_spot_preset_with_refinement() {
        let text = minimal() + "\n[repetitions]\npreset = \"sweet-spot\"\nstandard = 12\n";
        let cfg = CampaignConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.repetitions, Repetitions { limited: 100, standard: 12, temporal: 1 });
    }

    #[test]
    fn unknown_preset_is_refused() {
        let text = minimal() + "\n[repetitions]\npreset = \"fast\"\n";
        assert!(CampaignConfig::from_toml(&text).is_err());
    }

    #[test]
    fn empty_axis_is_refused() {
        let text = minimal().replace("scenarios = [\"closed\"]", "scenarios = []");
        let err = CampaignConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, ConfigError::EmptySelection("scenarios")), "{err}");
    }

    #[test]
    fn duplicate_entries_are_refused() {
        let text = minimal().replace("[\"bd\", \"md\"]", "[\"bd\", \"bd\"]");
        let err = CampaignConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { list: "pipelines", .. }), "{err}");
    }

    #[test]
    fn temporal_repetitions_must_be_one() {
        let text = minimal() + "\n[repetitions]\ntemporal = 3\n";
        let err = CampaignConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, ConfigError::TemporalRepetitions(3)), "{err}");
    }

    #[test]
    fn zero_repetitions_are_refused() {
        let text = minimal() + "\n[repetitions]\nstandard = 0\n";
        let err = CampaignConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, ConfigError::ZeroRepetitions { which: "standard", .. }), "{err}");
    }

    #[test]
    fn scarce_fraction_override() {
        let text = minimal().replace(
            "availabilities = [\"limited\", \"abundant\"]",
            "availabilities = [{ kind = \"scarce\", fraction = 0.2 }]",
        );
        let cfg = CampaignConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.availabilities[0].name(), "scarce");
    }

    #[test]
    fn repetition_schedule_follows_availability_and_regime() {
        let cfg = CampaignConfig::from_toml(&minimal()).unwrap();
        let lim = AvailabilityLevel::limited();
        let ab = AvailabilityLevel::abundant();
        assert_eq!(cfg.repetitions_for(&lim, Regime::Static), 1000);
        assert_eq!(cfg.repetitions_for(&ab, Regime::Static), 100);
        assert_eq!(cfg.repetitions_for(&lim, Regime::Temporal), 1);
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = CampaignConfig::from_toml(&minimal()).unwrap();
        let snap = cfg.snapshot();
        let again = CampaignConfig::from_toml(&snap).unwrap();
        assert_eq!(again.snapshot(), snap);
    }

    #[test]
    fn adversarial_scenario_validates_the_rule() {
        let text = minimal().replace("scenarios = [\"closed\"]", "scenarios = [\"adversarial\"]")
            + "\n[perturbation]\nduration_increments = []\nbyte_increments = []\n";
        assert!(CampaignConfig::from_toml(&text).is_err());
    }
}
