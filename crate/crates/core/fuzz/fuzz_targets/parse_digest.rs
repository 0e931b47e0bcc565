#![no_main]

use donning_core::imagestore::Digest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(d) = s.parse::<Digest>() {
            assert_eq!(d.to_string().parse::<Digest>().unwrap(), d);
        }
    }
});
