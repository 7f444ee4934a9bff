#![no_main]

use libfuzzer_sys::fuzz_target;
use salience_core::geometry::{parse_predictions, serialize_predictions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(frames) = parse_predictions(text) {
        for d in frames.iter().flat_map(|f| &f.detections) {
            assert!(d.bbox.is_valid());
            assert!((0.0..=1.0).contains(&d.confidence));
        }
        assert_eq!(parse_predictions(&serialize_predictions(&frames)).unwrap(), frames);
    }
});
