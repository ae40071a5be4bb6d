#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = critsense::io::read_rabi_signal(data, 1.0, 1.0) {
        assert_eq!(s.tau.len(), s.pe.len());
    }
});
