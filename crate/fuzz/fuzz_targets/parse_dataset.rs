#![no_main]

use libfuzzer_sys::fuzz_target;
use salience_core::dataset::{parse_dataset, parse_dataset_lenient, serialize_dataset, validate};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((d, lines)) = parse_dataset_lenient(text) {
        assert_eq!(lines.len(), d.frames.len());
        for v in validate(&d) {
            assert!(v.frame_index < d.frames.len());
        }
    }
    if let Ok(d) = parse_dataset(text) {
        assert!(validate(&d).is_empty());
        assert_eq!(parse_dataset(&serialize_dataset(&d)).unwrap(), d);
    }
});
