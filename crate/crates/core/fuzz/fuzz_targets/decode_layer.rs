#![no_main]

use donning_core::imagestore::{decode_layer, encode_layer};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes is canonical, so it must re-encode to the same bytes.
    if let Ok(layer) = decode_layer(data) {
        assert_eq!(encode_layer(&layer), data);
    }
});
