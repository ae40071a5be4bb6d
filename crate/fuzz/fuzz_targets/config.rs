#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = critsense_cli::parse_config(text) {
            // accepted configs must carry every setting of their scenario
            for s in critsense_cli::config::schema(c.scenario) {
                assert!(c.settings.contains_key(s.key));
            }
        }
    }
});
