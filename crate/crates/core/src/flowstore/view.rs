//! Numeric projections of a dataset.
//!
//! A [`FeatureView`] is the row-major matrix a learner consumes. Projection
//! selects the Complete or Essential column list, replaces every port column
//! by its IANA category code, and never emits IP columns (they are not even
//! stored). Row order and the row-to-record mapping are preserved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spec::{DatasetSpec, FeatureSet};
use super::{Dataset, FlowRecord};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("feature set names columns absent from the dataset: {}", .0.join(", "))]
    MissingFeatures(Vec<String>),
    #[error("port {value} out of range 0..=65535")]
    PortOutOfRange { value: i64 },
    #[error("row {row}: port column `{column}` holds {value}, expected an integer port")]
    PortNotInteger { row: usize, column: String, value: f64 },
}

/// IANA port category: 0 well-known (0–1023), 1 registered (1024–49151),
/// 2 dynamic (49152–65535).
pub fn encode_port(port: i64) -> Result<u8, ViewError> {
    match port {
        0..=1023 => Ok(0),
        1024..=49151 => Ok(1),
        49152..=65535 => Ok(2),
        _ => Err(ViewError::PortOutOfRange { value: port }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureView<S: Scalar> {
    column_names: Vec<String>,
    /// Row-major matrix, `nrows × column_names.len()`.
    data: Vec<S>,
    nrows: usize,
    /// View row → index of the source record (in whatever slice the view was
    /// projected from).
    row_to_record: Vec<usize>,
    feature_set: Option<FeatureSet>,
}

impl<S: Scalar> FeatureView<S> {
    /// Build a view directly from rows; used for learner-to-learner inputs
    /// (e.g. stacking) and tests.
    pub fn from_rows(
        column_names: Vec<String>,
        rows: Vec<Vec<S>>,
        feature_set: Option<FeatureSet>,
    ) -> FeatureView<S> {
        let ncols = column_names.len();
        let nrows = rows.len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "row {i} width {} != {ncols}", row.len());
            data.extend_from_slice(row);
        }
        FeatureView { column_names, data, nrows, row_to_record: (0..nrows).collect(), feature_set }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn feature_set(&self) -> Option<FeatureSet> {
        self.feature_set
    }

    pub fn row(&self, r: usize) -> &[S] {
        let w = self.ncols();
        &self.data[r * w..(r + 1) * w]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.ncols() + c]
    }

    pub fn row_to_record(&self) -> &[usize] {
        &self.row_to_record
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.ncols().max(1)).take(self.nrows)
    }

    /// Subset by view-row indices, keeping each row's original record index.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureView<S> {
        let w = self.ncols();
        let mut data = Vec::with_capacity(rows.len() * w);
        let mut row_to_record = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            row_to_record.push(self.row_to_record[r]);
        }
        FeatureView {
            column_names: self.column_names.clone(),
            data,
            nrows: rows.len(),
            row_to_record,
            feature_set: self.feature_set,
        }
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Project a dataset into the requested feature set.
pub fn project<S: Scalar>(d: &Dataset<S>, fs: FeatureSet) -> Result<FeatureView<S>, ViewError> {
    project_records(&d.spec, &d.records, fs)
}

/// Project an arbitrary record slice (used for perturbed copies). Row `i` of
/// the view maps to `records[i]`.
pub fn project_records<S: Scalar>(
    spec: &DatasetSpec,
    records: &[FlowRecord<S>],
    fs: FeatureSet,
) -> Result<FeatureView<S>, ViewError> {
    let names = spec.features_for(fs);
    let mut positions = Vec::with_capacity(names.len());
    let mut missing = Vec::new();
    for name in names {
        match spec.feature_position(name) {
            Some(p) => positions.push(p),
            None => missing.push(name.clone()),
        }
    }
    // Stored vectors follow the complete list; verify width agreement too.
    let want = spec.feature_lists.complete.len();
    if let Some(r) = records.iter().find(|r| r.features.len() != want) {
        missing.push(format!("(record width {} != complete list width {want})", r.features.len()));
    }
    if !missing.is_empty() {
        return Err(ViewError::MissingFeatures(missing));
    }

    let is_port: Vec<bool> = names.iter().map(|n| spec.port_columns.contains(n)).collect();
    let mut data = Vec::with_capacity(records.len() * names.len());
    for (row, rec) in records.iter().enumerate() {
        for (k, &pos) in positions.iter().enumerate() {
            let v = rec.features[pos];
            if is_port[k] {
                let raw = v.to_f64().unwrap_or(f64::NAN);
                if raw.fract() != 0.0 || !raw.is_finite() {
                    return Err(ViewError::PortNotInteger {
                        row: row + 1,
                        column: names[k].clone(),
                        value: raw,
                    });
                }
                let code = encode_port(raw as i64)?;
                data.push(S::from_u8(code).unwrap());
            } else {
                data.push(v);
            }
        }
    }
    Ok(FeatureView {
        column_names: names.to_vec(),
        data,
        nrows: records.len(),
        row_to_record: (0..records.len()).collect(),
        feature_set: Some(fs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowstore::spec::tests::TOY_SPEC;
    use crate::flowstore::BaseFields;
    use proptest::prelude::*;

    fn toy_spec() -> DatasetSpec {
        DatasetSpec::from_toml(TOY_SPEC).unwrap()
    }

    fn rec(features: Vec<f64>) -> FlowRecord<f64> {
        FlowRecord {
            features,
            class_id: 0,
            timestamp: None,
            protocol: None,
            src_internal: false,
            base: BaseFields::ZERO,
        }
    }

    fn toy_dataset(rows: Vec<Vec<f64>>) -> Dataset<f64> {
        Dataset::new(toy_spec(), rows.into_iter().map(rec).collect())
    }

    #[test]
    fn iana_boundaries() {
        assert_eq!(encode_port(0).unwrap(), 0);
        assert_eq!(encode_port(80).unwrap(), 0);
        assert_eq!(encode_port(1023).unwrap(), 0);
        assert_eq!(encode_port(1024).unwrap(), 1);
        assert_eq!(encode_port(8080).unwrap(), 1);
        assert_eq!(encode_port(49151).unwrap(), 1);
        assert_eq!(encode_port(49152).unwrap(), 2);
        assert_eq!(encode_port(65535).unwrap(), 2);
        assert!(encode_port(65536).is_err());
        assert!(encode_port(-1).is_err());
    }

    #[test]
    fn complete_projection_encodes_ports_and_keeps_values() {
        // Columns: duration_s, tot_bytes, tot_pkts, byts_per_s, src_port, dst_port.
        let d = toy_dataset(vec![
            vec![1.5, 100.0, 10.0, 66.6, 80.0, 50000.0],
            vec![2.5, 200.0, 20.0, 80.0, 8080.0, 1023.0],
        ]);
        let v = project(&d, FeatureSet::Complete).unwrap();
        assert_eq!(v.nrows(), 2);
        assert_eq!(v.ncols(), 6);
        assert_eq!(v.feature_set(), Some(FeatureSet::Complete));
        assert_eq!(v.row(0), &[1.5, 100.0, 10.0, 66.6, 0.0, 2.0]);
        assert_eq!(v.row(1), &[2.5, 200.0, 20.0, 80.0, 1.0, 0.0]);
    }

    #[test]
    fn essential_projection_matches_source_cells() {
        let rows = vec![
            vec![1.0, 10.0, 1.0, 10.0, 1.0, 1.0],
            vec![2.0, 20.0, 2.0, 10.0, 2.0, 2.0],
            vec![3.0, 30.0, 3.0, 10.0, 3.0, 3.0],
        ];
        let d = toy_dataset(rows.clone());
        let v = project(&d, FeatureSet::Essential).unwrap();
        assert_eq!(v.column_names(), &["duration_s", "tot_bytes", "tot_pkts"]);
        for (r, src) in rows.iter().enumerate() {
            assert_eq!(v.row(r), &src[0..3], "row {r} differs from source columns");
        }
    }

    #[test]
    fn empty_dataset_projects_to_full_schema() {
        let d = toy_dataset(vec![]);
        let v = project(&d, FeatureSet::Complete).unwrap();
        assert_eq!(v.nrows(), 0);
        assert_eq!(v.ncols(), 6);
    }

    #[test]
    fn missing_features_are_listed() {
        let mut d = toy_dataset(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]);
        d.spec.feature_lists.essential = vec!["duration_s".into(), "ghost".into()];
        let err = project(&d, FeatureSet::Essential).unwrap_err();
        assert!(matches!(err, ViewError::MissingFeatures(ref names) if names == &["ghost"]));
    }

    #[test]
    fn fractional_port_is_rejected() {
        let d = toy_dataset(vec![vec![1.0, 2.0, 3.0, 4.0, 80.5, 443.0]]);
        let err = project(&d, FeatureSet::Complete).unwrap_err();
        assert!(matches!(err, ViewError::PortNotInteger { row: 1, .. }));
    }

    #[test]
    fn select_rows_remaps_to_original_records() {
        let d = toy_dataset(vec![
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0],
            vec![2.0, 0.0, 0.0, 0.0, 1.0, 1.0],
        ]);
        let v = project(&d, FeatureSet::Complete).unwrap();
        let sub = v.select_rows(&[2, 0]);
        assert_eq!(sub.nrows(), 2);
        assert_eq!(sub.row_to_record(), &[2, 0]);
        assert_eq!(sub.get(0, 0), 2.0);
        assert_eq!(sub.get(1, 0), 0.0);
    }

    proptest! {
        /// No IP columns, port categories in {0,1,2}, bijective row mapping.
        #[test]
        fn projection_invariants(
            rows in proptest::collection::vec(
                (0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e4, 0.0f64..1e6, 0i64..=65535, 0i64..=65535),
                0..40,
            ),
            essential in proptest::bool::ANY,
        ) {
            let d = toy_dataset(
                rows.iter()
                    .map(|&(a, b, c, r, p, q)| vec![a, b, c, r, p as f64, q as f64])
                    .collect(),
            );
            let fs = if essential { FeatureSet::Essential } else { FeatureSet::Complete };
            let v = project(&d, fs).unwrap();
            prop_assert_eq!(v.nrows(), rows.len());
            for ip in &d.spec.ip_columns {
                prop_assert!(!v.column_names().contains(ip));
            }
            for port_col in &d.spec.port_columns {
                if let Some(c) = v.column(port_col) {
                    for r in 0..v.nrows() {
                        let code = v.get(r, c);
                        prop_assert!(code == 0.0 || code == 1.0 || code == 2.0);
                    }
                }
            }
            let mut mapping: Vec<usize> = v.row_to_record().to_vec();
            mapping.sort_unstable();
            let expect: Vec<usize> = (0..rows.len()).collect();
            prop_assert_eq!(mapping, expect);
        }
    }
}
