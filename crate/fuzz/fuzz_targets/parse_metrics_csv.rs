#![no_main]

use libfuzzer_sys::fuzz_target;
use salience_core::eval::parse_metrics_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_metrics_csv(text) {
        assert!(rows.iter().all(|r| r.precision_all.is_finite() && r.recall_salient.is_finite()));
    }
});
