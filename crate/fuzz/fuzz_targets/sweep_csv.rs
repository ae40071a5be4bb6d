#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sweep) = critsense::io::read_sweep(data) {
        assert!(sweep.iter().all(|s| !s.tau.is_empty() && s.tau.len() == s.pe.len()));
    }
});
