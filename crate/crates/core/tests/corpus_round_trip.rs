use std::path::Path;

use bandformer::verify::{midi_round_trip, DURATION_TOLERANCE_SECONDS, ONSET_TOLERANCE_SECONDS};

#[test]
fn every_corpus_file_survives_both_round_trips() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus");
    let mut checked = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|x| x != "mid") {
            continue;
        }
        let r = midi_round_trip(&std::fs::read(&path).unwrap()).unwrap();
        assert!(r.count_mismatches.is_empty(), "{}: {:?}", path.display(), r.count_mismatches);
        assert!(r.max_onset_error <= ONSET_TOLERANCE_SECONDS, "{}: {r:?}", path.display());
        assert!(r.max_duration_error <= DURATION_TOLERANCE_SECONDS, "{}: {r:?}", path.display());
        assert!(r.max_write_error_ticks <= 1.0, "{}: {r:?}", path.display());
        assert!(r.notes > 0);
        checked += 1;
    }
    assert_eq!(checked, 24);
}
