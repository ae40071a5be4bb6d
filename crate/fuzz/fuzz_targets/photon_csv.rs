#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = critsense::io::read_photon_distribution(data) {
        assert!(d.probs.iter().all(|p| *p >= 0.0));
    }
});
