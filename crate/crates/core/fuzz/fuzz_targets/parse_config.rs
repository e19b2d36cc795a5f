#![no_main]

use libfuzzer_sys::fuzz_target;
use offload_core::config::write_config;
use offload_core::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        // anything accepted must survive its own serialization
        let again = parse_config(&write_config(&cfg)).expect("written config parses");
        assert_eq!(again, cfg);
    }
});
