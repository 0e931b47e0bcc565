#![no_main]

use donning_core::imagestore::ImageRef;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = ImageRef::parse(s) {
            assert_eq!(ImageRef::parse(&r.to_string()).unwrap(), r);
        }
    }
});
