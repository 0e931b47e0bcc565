#![no_main]

use donning_core::autobuild::parse_packages_tsv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_packages_tsv(data);
});
