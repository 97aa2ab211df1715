use std::collections::BTreeSet;
use std::path::Path;

use bandformer::training::TrainConfig;

#[test]
fn grid_covers_every_family_and_optimization_variant() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/grid");
    let mut labels = BTreeSet::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = TrainConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let label = cfg.variant_label();
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), label, "file name matches its settings");
        assert!(cfg.data.is_some());
        labels.insert(label);
    }
    let expected: BTreeSet<String> = ["relative", "sliding_window", "lstm"]
        .iter()
        .flat_map(|m| ["none", "xavier", "earlystop", "both"].map(|v| format!("{m}_{v}")))
        .collect();
    assert_eq!(labels, expected);
}
