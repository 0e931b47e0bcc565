#![no_main]

use donning_core::imagestore::{format_index, parse_index};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entries) = parse_index(text) {
            assert_eq!(parse_index(&format_index(&entries)).unwrap(), entries);
        }
    }
});
