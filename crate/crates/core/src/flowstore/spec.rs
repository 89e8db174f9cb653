//! Dataset specification: the schema contract between a merged NetFlow CSV
//! and the benchmark. Specs are TOML files; see `specs/` in the repository
//! root for the shipped ones.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{Expr, ExprError};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read spec file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed spec TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("class table must declare class 0 (benign)")]
    MissingBenignClass,
    #[error("class table key `{0}` is not an integer id")]
    BadClassId(String),
    #[error("essential feature `{0}` is not in the complete list")]
    EssentialNotInComplete(String),
    #[error(
        "essential list has {essential} features but complete has {complete}; \
         essential must be roughly half (between 30% and 70%) of complete"
    )]
    EssentialSizeOff { essential: usize, complete: usize },
    #[error("feature list contains duplicate name `{0}`")]
    DuplicateFeature(String),
    #[error("ip column `{0}` must not appear in the complete feature list")]
    IpInFeatures(String),
    #[error("column `{0}` is reserved ({1}) and must not appear in the feature lists")]
    ReservedInFeatures(String, &'static str),
    #[error("src_ip_column `{0}` is not one of the declared ip columns")]
    SrcIpNotDeclared(String),
    #[error("internal subnet `{0}` is not valid IPv4 CIDR notation: {1}")]
    BadCidr(String, String),
    #[error("derived feature `{0}` is not in the complete feature list")]
    DerivedNotInComplete(String),
    #[error("formula for derived feature `{feature}` is invalid: {source}")]
    BadFormula {
        feature: String,
        #[source]
        source: ExprError,
    },
    #[error("caps must be at least 1 (got benign {benign}, per-class malicious {malicious})")]
    ZeroCap { benign: u64, malicious: u64 },
    #[error("duration unit must be positive, got {0}")]
    BadDurationUnit(f64),
}

/// An IPv4 network in `a.b.c.d/n` notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Cidr {
    addr: u32,
    prefix: u8,
}

impl Cidr {
    pub fn parse(s: &str) -> Result<Cidr, String> {
        let (addr, prefix) = match s.split_once('/') {
            Some((a, p)) => (a, p),
            None => (s, "32"),
        };
        let ip: Ipv4Addr = addr.parse().map_err(|e| format!("bad address: {e}"))?;
        let prefix: u8 = prefix.parse().map_err(|e| format!("bad prefix: {e}"))?;
        if prefix > 32 {
            return Err(format!("prefix /{prefix} out of range"));
        }
        Ok(Cidr { addr: u32::from(ip), prefix })
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        let mask = if self.prefix == 0 { 0 } else { u32::MAX << (32 - self.prefix) };
        (u32::from(ip) & mask) == (self.addr & mask)
    }
}

impl TryFrom<String> for Cidr {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Cidr::parse(&s)
    }
}

impl From<Cidr> for String {
    fn from(c: Cidr) -> String {
        format!("{}/{}", Ipv4Addr::from(c.addr), c.prefix)
    }
}

/// Which of the two projections of the feature space to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSet {
    Complete,
    Essential,
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureSet::Complete => write!(f, "complete"),
            FeatureSet::Essential => write!(f, "essential"),
        }
    }
}

/// A derived feature and the formula that recomputes it from base fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivedRule {
    pub feature: String,
    /// Original formula text, kept for snapshots and error messages.
    pub formula: String,
    #[serde(skip)]
    pub expr: Option<Expr>,
}

impl DerivedRule {
    pub fn expr(&self) -> &Expr {
        self.expr.as_ref().expect("derived rule formula compiled at validation")
    }
}

/// Maps the perturbable base fields to CSV columns. Any of the three may be
/// absent, in which case the field loads as zero and the dataset cannot run
/// the adversarial scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseColumns {
    pub duration: Option<String>,
    pub tot_bytes: Option<String>,
    pub tot_packets: Option<String>,
    /// Multiplier converting the duration column to seconds (1e-6 for
    /// exporters that emit microseconds).
    #[serde(default = "default_unit")]
    pub duration_unit_seconds: f64,
}

fn default_unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Caps {
    pub benign: u64,
    pub per_class_malicious: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureLists {
    pub complete: Vec<String>,
    pub essential: Vec<String>,
}

/// Validated dataset specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    /// Name of the NetFlow exporter that produced the CSV (provenance).
    #[serde(default)]
    pub netflow_tool: String,
    /// Class id to family name; id 0 is benign.
    #[serde(with = "u32_keyed_map")]
    pub class_table: BTreeMap<u32, String>,
    pub feature_lists: FeatureLists,
    pub label_column: String,
    pub timestamp_column: Option<String>,
    pub protocol_column: Option<String>,
    #[serde(default)]
    pub port_columns: Vec<String>,
    #[serde(default)]
    pub ip_columns: Vec<String>,
    /// Which ip column holds the flow source; defaults to the first declared
    /// ip column. Internal-subnet membership is evaluated on this column.
    pub src_ip_column: Option<String>,
    #[serde(default)]
    pub internal_subnets: Vec<Cidr>,
    #[serde(default)]
    pub derived_rules: Vec<DerivedRule>,
    #[serde(default)]
    pub base_columns: BaseColumns,
    pub caps: Caps,
    /// Ceiling for perturbed flow durations, seconds.
    #[serde(default = "default_max_flow_duration")]
    pub max_flow_duration_seconds: f64,
    /// When set, empty cells and non-finite sentinels in feature columns load
    /// as 0 instead of aborting.
    #[serde(default)]
    pub map_missing_to_zero: bool,
}

fn default_max_flow_duration() -> f64 {
    3600.0
}

/// TOML map keys are strings; bridge them to numeric class ids.
mod u32_keyed_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<u32, String>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let as_text: BTreeMap<String, &String> =
            map.iter().map(|(k, v)| (k.to_string(), v)).collect();
        as_text.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<u32, String>, D::Error> {
        let as_text = BTreeMap::<String, String>::deserialize(de)?;
        as_text
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<u32>()
                    .map(|id| (id, v))
                    .map_err(|_| D::Error::custom(format!("class id `{k}` is not a u32")))
            })
            .collect()
    }
}

impl Default for BaseColumns {
    fn default() -> Self {
        BaseColumns {
            duration: None,
            tot_bytes: None,
            tot_packets: None,
            duration_unit_seconds: 1.0,
        }
    }
}

impl DatasetSpec {
    /// Load and validate a spec from a TOML file.
    pub fn load(path: &Path) -> Result<DatasetSpec, SpecError> {
        let text = std::fs::read_to_string(path)?;
        DatasetSpec::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<DatasetSpec, SpecError> {
        let mut spec: DatasetSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Compile formulas and check every structural invariant.
    pub fn validate(&mut self) -> Result<(), SpecError> {
        if !self.class_table.contains_key(&0) {
            return Err(SpecError::MissingBenignClass);
        }
        if self.caps.benign == 0 || self.caps.per_class_malicious == 0 {
            return Err(SpecError::ZeroCap {
                benign: self.caps.benign,
                malicious: self.caps.per_class_malicious,
            });
        }
        if self.base_columns.duration_unit_seconds <= 0.0 {
            return Err(SpecError::BadDurationUnit(self.base_columns.duration_unit_seconds));
        }

        let complete = &self.feature_lists.complete;
        let essential = &self.feature_lists.essential;
        for list in [complete, essential] {
            let mut seen = std::collections::BTreeSet::new();
            for f in list {
                if !seen.insert(f.as_str()) {
                    return Err(SpecError::DuplicateFeature(f.clone()));
                }
            }
        }
        for f in essential {
            if !complete.contains(f) {
                return Err(SpecError::EssentialNotInComplete(f.clone()));
            }
        }
        // "Roughly half": tolerate 30%..70% of the complete width.
        let (ne, nc) = (essential.len(), complete.len());
        if nc > 0 && (ne * 10 < nc * 3 || ne * 10 > nc * 7) {
            return Err(SpecError::EssentialSizeOff { essential: ne, complete: nc });
        }
        for ip in &self.ip_columns {
            if complete.contains(ip) {
                return Err(SpecError::IpInFeatures(ip.clone()));
            }
        }
        for (col, what) in [
            (Some(&self.label_column), "label"),
            (self.timestamp_column.as_ref(), "timestamp"),
        ] {
            if let Some(col) = col {
                if complete.contains(col) {
                    return Err(SpecError::ReservedInFeatures(col.clone(), what));
                }
            }
        }
        if let Some(src) = &self.src_ip_column {
            if !self.ip_columns.contains(src) {
                return Err(SpecError::SrcIpNotDeclared(src.clone()));
            }
        }
        for rule in &mut self.derived_rules {
            if !complete.contains(&rule.feature) {
                return Err(SpecError::DerivedNotInComplete(rule.feature.clone()));
            }
            let expr = Expr::parse(&rule.formula).map_err(|source| SpecError::BadFormula {
                feature: rule.feature.clone(),
                source,
            })?;
            rule.expr = Some(expr);
        }
        Ok(())
    }

    /// The column the source address is read from, if any ip columns exist.
    pub fn src_ip(&self) -> Option<&str> {
        self.src_ip_column.as_deref().or_else(|| self.ip_columns.first().map(|s| s.as_str()))
    }

    pub fn features_for(&self, fs: FeatureSet) -> &[String] {
        match fs {
            FeatureSet::Complete => &self.feature_lists.complete,
            FeatureSet::Essential => &self.feature_lists.essential,
        }
    }

    /// Position of a feature in the stored (complete-order) feature vector.
    pub fn feature_position(&self, name: &str) -> Option<usize> {
        self.feature_lists.complete.iter().position(|f| f == name)
    }

    pub fn class_name(&self, id: u32) -> Option<&str> {
        self.class_table.get(&id).map(|s| s.as_str())
    }

    /// Malicious class ids in ascending order.
    pub fn malicious_classes(&self) -> Vec<u32> {
        self.class_table.keys().copied().filter(|&c| c != 0).collect()
    }

    pub fn is_internal(&self, ip: Ipv4Addr) -> bool {
        self.internal_subnets.iter().any(|c| c.contains(ip))
    }
}
