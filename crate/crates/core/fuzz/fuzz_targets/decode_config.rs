#![no_main]

use donning_core::imagestore::ImageConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = ImageConfig::decode(data) {
        let encoded = config.encode();
        assert_eq!(ImageConfig::decode(&encoded).unwrap(), config);
    }
});
