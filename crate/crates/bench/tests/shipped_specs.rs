//! Every spec file shipped in `specs/` must load, validate, and keep the
//! shape the rest of the tooling assumes. Width changes are almost always
//! accidents, so they are pinned exactly.

use std::path::PathBuf;

use flowbench_core::flowstore::DatasetSpec;

fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn load(name: &str) -> DatasetSpec {
    let path = specs_dir().join(name);
    DatasetSpec::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// (file, classes, |complete|, |essential|)
const SHAPES: [(&str, usize, usize, usize); 5] = [
    ("ctu13.toml", 7, 28, 14),
    ("nb15.toml", 8, 43, 22),
    ("ufnb15.toml", 8, 38, 19),
    ("cicids17.toml", 10, 74, 37),
    ("gtcs.toml", 5, 78, 39),
];

#[test]
fn all_shipped_specs_validate_with_pinned_shapes() {
    for (file, classes, complete, essential) in SHAPES {
        let spec = load(file);
        assert_eq!(spec.class_table.len(), classes, "{file}: class count");
        assert_eq!(spec.feature_lists.complete.len(), complete, "{file}: complete width");
        assert_eq!(spec.feature_lists.essential.len(), essential, "{file}: essential width");
        assert_eq!(spec.class_table[&0], "Benign", "{file}: class 0");
    }
}

#[test]
fn every_spec_supports_all_scenarios() {
    for (file, ..) in SHAPES {
        let spec = load(file);
        // Adversarial runs need a perturbable duration plus byte mapping and
        // compiled recompute formulas.
        assert!(spec.base_columns.duration.is_some(), "{file}: duration base column");
        assert!(spec.base_columns.tot_bytes.is_some(), "{file}: byte base column");
        assert!(!spec.derived_rules.is_empty(), "{file}: derived rules");
        for rule in &spec.derived_rules {
            assert!(rule.expr.is_some(), "{file}: {} formula compiled", rule.feature);
        }
        // Temporal splits need a timestamp; the unknown-attack scenario needs
        // at least two malicious families.
        assert!(spec.timestamp_column.is_some(), "{file}: timestamp column");
        assert!(spec.malicious_classes().len() >= 2, "{file}: malicious families");
        // Internal/external provenance drives perturbation eligibility.
        assert!(spec.src_ip().is_some(), "{file}: source ip column");
        assert!(!spec.internal_subnets.is_empty(), "{file}: internal subnets");
    }
}

#[test]
fn fast_columns_stay_in_the_essential_view() {
    // The compact projection always keeps what a constrained deployment can
    // afford to compute: duration, volume totals, protocol and ports.
    for (file, ..) in SHAPES {
        let spec = load(file);
        let essential = &spec.feature_lists.essential;
        for col in [
            spec.base_columns.duration.as_ref().unwrap(),
            spec.base_columns.tot_bytes.as_ref().unwrap(),
            spec.base_columns.tot_packets.as_ref().unwrap(),
        ] {
            assert!(essential.contains(col), "{file}: {col} not essential");
        }
        if let Some(proto) = &spec.protocol_column {
            assert!(essential.contains(proto), "{file}: {proto} not essential");
        }
        for port in &spec.port_columns {
            assert!(essential.contains(port), "{file}: {port} not essential");
        }
    }
}
