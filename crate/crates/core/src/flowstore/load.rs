//! CSV ingestion. One merged, headered CSV per dataset; every parse problem
//! aborts with the 1-based data row that caused it.

use std::collections::HashMap;
use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

use super::spec::DatasetSpec;
use super::{BaseFields, Dataset, FlowRecord};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot open dataset file: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("required column `{column}` not found in CSV header")]
    MissingColumn { column: String },
    #[error("row {row}: unknown class label `{label}`")]
    UnknownClass { row: usize, label: String },
    #[error("row {row}: column `{column}` holds `{value}`, expected a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}: column `{column}` is non-finite ({value}); reject or set map_missing_to_zero")]
    NonFinite { row: usize, column: String, value: String },
    #[error("row {row}: column `{column}` holds `{value}`, expected a non-negative integer")]
    NonInteger { row: usize, column: String, value: String },
    #[error("row {row}: column `{column}` holds `{value}`, expected an IPv4 address")]
    BadIp { row: usize, column: String, value: String },
    #[error("row {row}: {detail}")]
    BadBase { row: usize, detail: String },
    #[error("row {row}: fewer fields than the header declares")]
    ShortRow { row: usize },
}

struct ColumnIndex {
    features: Vec<usize>,
    label: usize,
    timestamp: Option<usize>,
    protocol: Option<usize>,
    src_ip: Option<usize>,
    other_ips: Vec<usize>,
    base_duration: Option<usize>,
    base_bytes: Option<usize>,
    base_packets: Option<usize>,
}

fn index_columns(spec: &DatasetSpec, header: &csv::StringRecord) -> Result<ColumnIndex, LoadError> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        by_name.entry(name.trim()).or_insert(i);
    }
    let find = |name: &str| -> Result<usize, LoadError> {
        by_name.get(name).copied().ok_or_else(|| LoadError::MissingColumn { column: name.into() })
    };
    let find_opt = |name: &Option<String>| -> Result<Option<usize>, LoadError> {
        name.as_deref().map(find).transpose()
    };

    let features =
        spec.feature_lists.complete.iter().map(|f| find(f)).collect::<Result<Vec<_>, _>>()?;
    let src_ip_name = spec.src_ip().map(|s| s.to_string());
    let src_ip = src_ip_name.as_deref().map(find).transpose()?;
    let other_ips = spec
        .ip_columns
        .iter()
        .filter(|c| Some(c.as_str()) != src_ip_name.as_deref())
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ColumnIndex {
        features,
        label: find(&spec.label_column)?,
        timestamp: find_opt(&spec.timestamp_column)?,
        protocol: find_opt(&spec.protocol_column)?,
        src_ip,
        other_ips,
        base_duration: find_opt(&spec.base_columns.duration)?,
        base_bytes: find_opt(&spec.base_columns.tot_bytes)?,
        base_packets: find_opt(&spec.base_columns.tot_packets)?,
    })
}

/// Load a merged CSV into a [`Dataset`], verifying every record invariant.
///
/// Rows are kept in file order; `chronologically_sorted` is set by checking
/// the timestamps are monotone in that order.
pub fn load_dataset<S: Scalar>(spec: &DatasetSpec, path: &Path) -> Result<Dataset<S>, LoadError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    let cols = index_columns(spec, &header)?;

    // Label cells may hold either the family name or the numeric id.
    let mut label_map: HashMap<String, u32> = HashMap::new();
    for (&id, name) in &spec.class_table {
        label_map.insert(name.clone(), id);
        label_map.insert(id.to_string(), id);
    }

    let mut records: Vec<FlowRecord<S>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let get = |idx: usize| -> Result<&str, LoadError> {
            rec.get(idx).ok_or(LoadError::ShortRow { row })
        };

        let label_raw = get(cols.label)?;
        let class_id = *label_map
            .get(label_raw)
            .ok_or_else(|| LoadError::UnknownClass { row, label: label_raw.to_string() })?;

        let mut features = Vec::with_capacity(cols.features.len());
        for (&idx, name) in cols.features.iter().zip(&spec.feature_lists.complete) {
            let raw = get(idx)?;
            let v = parse_feature(raw, spec.map_missing_to_zero, row, name)?;
            features.push(S::from_f64(v).expect("finite f64 converts to any scalar"));
        }

        let timestamp = match cols.timestamp {
            Some(idx) => Some(parse_f64(get(idx)?, row, spec.timestamp_column.as_deref().unwrap())?),
            None => None,
        };
        let protocol = match cols.protocol {
            Some(idx) => {
                let name = spec.protocol_column.as_deref().unwrap();
                let v = parse_u64(get(idx)?, row, name)?;
                Some(u16::try_from(v).map_err(|_| LoadError::NonInteger {
                    row,
                    column: name.into(),
                    value: get(idx).unwrap_or_default().to_string(),
                })?)
            }
            None => None,
        };

        let src_internal = match cols.src_ip {
            Some(idx) => {
                let raw = get(idx)?;
                let ip: Ipv4Addr = raw.parse().map_err(|_| LoadError::BadIp {
                    row,
                    column: spec.src_ip().unwrap().to_string(),
                    value: raw.to_string(),
                })?;
                spec.is_internal(ip)
            }
            None => false,
        };
        // Remaining IP columns are validated and discarded.
        for &idx in &cols.other_ips {
            let raw = get(idx)?;
            raw.parse::<Ipv4Addr>().map_err(|_| LoadError::BadIp {
                row,
                column: header.get(idx).unwrap_or("?").to_string(),
                value: raw.to_string(),
            })?;
        }

        let base = parse_base(spec, &cols, &rec, row)?;
        records.push(FlowRecord { features, class_id, timestamp, protocol, src_internal, base });
    }
    Ok(Dataset::new(spec.clone(), records))
}

fn parse_base(
    spec: &DatasetSpec,
    cols: &ColumnIndex,
    rec: &csv::StringRecord,
    row: usize,
) -> Result<BaseFields, LoadError> {
    let cell = |idx: Option<usize>| idx.and_then(|i| rec.get(i));
    let duration = match cell(cols.base_duration) {
        Some(raw) => {
            let name = spec.base_columns.duration.as_deref().unwrap();
            parse_f64(raw, row, name)? * spec.base_columns.duration_unit_seconds
        }
        None => 0.0,
    };
    let tot_bytes = match cell(cols.base_bytes) {
        Some(raw) => parse_u64(raw, row, spec.base_columns.tot_bytes.as_deref().unwrap())?,
        None => 0,
    };
    let tot_packets = match cell(cols.base_packets) {
        Some(raw) => parse_u64(raw, row, spec.base_columns.tot_packets.as_deref().unwrap())?,
        None => 0,
    };
    if duration < 0.0 {
        return Err(LoadError::BadBase { row, detail: format!("negative duration {duration}") });
    }
    if tot_packets > 0 && tot_bytes < tot_packets {
        return Err(LoadError::BadBase {
            row,
            detail: format!(
                "tot_bytes {tot_bytes} < tot_packets {tot_packets} (every packet is at least one byte)"
            ),
        });
    }
    Ok(BaseFields { duration, tot_bytes, tot_packets })
}

fn parse_feature(
    raw: &str,
    missing_to_zero: bool,
    row: usize,
    column: &str,
) -> Result<f64, LoadError> {
    if raw.is_empty() {
        return if missing_to_zero {
            Ok(0.0)
        } else {
            Err(LoadError::NonNumeric { row, column: column.into(), value: String::new() })
        };
    }
    let v: f64 = raw.parse().map_err(|_| LoadError::NonNumeric {
        row,
        column: column.into(),
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return if missing_to_zero {
            Ok(0.0)
        } else {
            Err(LoadError::NonFinite { row, column: column.into(), value: raw.to_string() })
        };
    }
    Ok(v)
}

fn parse_f64(raw: &str, row: usize, column: &str) -> Result<f64, LoadError> {
    let v: f64 = raw.parse().map_err(|_| LoadError::NonNumeric {
        row,
        column: column.into(),
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(LoadError::NonFinite { row, column: column.into(), value: raw.to_string() });
    }
    Ok(v)
}

/// Accepts integer text and integral float text ("12", "12.0", "1.2e3").
fn parse_u64(raw: &str, row: usize, column: &str) -> Result<u64, LoadError> {
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    let v = parse_f64(raw, row, column)?;
    if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(LoadError::NonInteger { row, column: column.into(), value: raw.to_string() });
    }
    Ok(v as u64)
}
