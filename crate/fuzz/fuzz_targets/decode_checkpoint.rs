#![no_main]

use libfuzzer_sys::fuzz_target;
use salience_core::detector::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_checkpoint(data) {
        assert_eq!(encode_checkpoint(&model), data);
    }
});
