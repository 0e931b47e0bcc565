#![no_main]

use donning_core::layerfs::{DirPath, PathName};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(p) = PathName::parse(s) {
            assert_eq!(PathName::parse(p.as_str()).unwrap(), p);
        }
        if let Ok(d) = DirPath::parse(s) {
            assert_eq!(DirPath::parse(d.as_str()).unwrap(), d);
        }
    }
});
