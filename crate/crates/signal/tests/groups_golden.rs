//! Golden-copy check: the shipped group table must match the region and
//! network electrode listings entry for entry.

use stratum_signal::{GroupKind, GroupTable};

fn golden() -> Vec<(&'static str, GroupKind, Vec<&'static str>)> {
    use GroupKind::*;
    vec![
        ("Prefrontal", Region, vec![
            "FP1", "FPZ", "FP2", "AF9", "AF7", "AF5", "AF3", "AF1", "AFZ", "AF2", "AF4", "AF6",
            "AF8", "AF10",
        ]),
        ("Frontal", Region, vec![
            "F9", "F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8", "F10", "FT9", "FT7",
            "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8", "FT10",
        ]),
        ("Central", Region, vec![
            "FC1", "FCZ", "FC2", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "CP1", "CPZ", "CP2",
        ]),
        ("Parietal", Region, vec![
            "TP9", "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8", "TP10", "P9",
            "P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8", "P10",
        ]),
        ("Occipital", Region, vec![
            "PO9", "PO7", "PO5", "PO3", "PO1", "POZ", "PO2", "PO4", "PO6", "PO8", "PO10", "O1",
            "OZ", "O2", "I1", "IZ", "I2",
        ]),
        ("Left Temporal", Region, vec!["T1", "T7", "T9", "FT7", "FT9", "TP7", "TP9"]),
        ("Right Temporal", Region, vec!["T2", "T8", "T10", "FT8", "FT10", "TP8", "TP10"]),
        ("Midline", Region, vec![
            "FPZ", "AFZ", "FZ", "FCZ", "CZ", "CPZ", "PZ", "POZ", "OZ", "IZ",
        ]),
        ("DMN", Network, vec![
            "FP1", "FPZ", "FP2", "AFZ", "FZ", "FCZ", "CZ", "CPZ", "PZ", "POZ", "OZ", "P5", "P7",
            "P6", "P8", "TP7", "TP8", "AF1", "AF2",
        ]),
        ("ECN", Network, vec![
            "AF1", "AF2", "AF3", "AF4", "AF5", "AF6", "AF7", "AF8", "AF9", "AF10", "F1", "F3",
            "F5", "F2", "F4", "F6", "FC1", "FC3", "FC2", "FC4", "P1", "P3", "P2", "P4", "CP1",
            "CP3", "CP2", "CP4",
        ]),
        ("SN", Network, vec![
            "FZ", "FCZ", "CZ", "F1", "F2", "FC1", "FC2", "C1", "C2", "FC3", "FC4", "C3", "C4",
        ]),
        ("DAN", Network, vec![
            "F1", "F3", "F2", "F4", "P1", "P3", "P5", "P2", "P4", "P6", "PO3", "PO4",
        ]),
        ("VAN", Network, vec![
            "F10", "F8", "FT10", "FT8", "T8", "TP8", "C6", "CP6", "P10", "P8", "P6", "T10",
            "TP10",
        ]),
        ("Visual", Network, vec![
            "P9", "P10", "PO9", "PO7", "PO5", "PO3", "PO1", "POZ", "PO2", "PO4", "PO6", "PO8",
            "PO10", "O1", "OZ", "O2", "I1", "IZ", "I2", "T10",
        ]),
        ("Somatomotor", Network, vec![
            "FC5", "FC3", "FC1", "FC2", "FC4", "FC6", "C5", "C3", "C1", "CZ", "C2", "C4", "C6",
            "CP5", "CP3", "CP1", "CP2", "CP4", "CP6",
        ]),
        ("Language", Network, vec![
            "F9", "F7", "F5", "FT9", "FT7", "T7", "TP7", "C5", "CP5", "P9", "P7", "P5", "T9",
            "TP9",
        ]),
    ]
}

#[test]
fn group_table_matches_golden_listing_verbatim() {
    let table = GroupTable::load_default().unwrap();
    let golden = golden();
    assert_eq!(table.len(), golden.len());
    for (name, kind, members) in golden {
        let g = table.get(name).unwrap_or_else(|| panic!("missing group {name}"));
        assert_eq!(g.kind, kind, "{name}");
        let got: Vec<&str> = g.members.iter().map(|s| s.as_str()).collect();
        assert_eq!(got, members, "members of {name}");
    }
}

#[test]
fn superset_is_the_union_of_all_groups() {
    let table = GroupTable::load_default().unwrap();
    let mut union: Vec<String> = golden()
        .iter()
        .flat_map(|(_, _, m)| m.iter().map(|s| s.to_string()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    union.sort();
    assert_eq!(table.superset(), union.as_slice());
    assert_eq!(table.superset().len(), 88);
}
