//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets. Seeds named `ok-*` must parse, `bad-*` must be rejected.

use std::fs;
use std::path::{Path, PathBuf};

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut v: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    assert!(!v.is_empty(), "no seeds for {target}");
    v
}

fn replay(target: &str, parse: impl Fn(&[u8]) -> bool) {
    for path in seeds(target) {
        let data = fs::read(&path).unwrap();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let ok = parse(&data);
        if name.starts_with("ok-") {
            assert!(ok, "{target}/{name} should parse");
        } else if name.starts_with("bad-") {
            assert!(!ok, "{target}/{name} should be rejected");
        }
    }
}

#[test]
fn config_seeds() {
    replay("config", |d| {
        std::str::from_utf8(d)
            .map(|t| critsense_cli::parse_config(t).is_ok())
            .unwrap_or(false)
    });
}

#[test]
fn csv_seeds() {
    use critsense::io;
    replay("trajectory_csv", |d| io::read_trajectory(d).is_ok());
    replay("rabi_csv", |d| io::read_rabi_signal(d, 1.0, 1.0).is_ok());
    replay("photon_csv", |d| io::read_photon_distribution(d).is_ok());
    replay("sweep_csv", |d| io::read_sweep(d).is_ok());
}

#[test]
fn every_scenario_has_a_seed() {
    let names: Vec<String> = seeds("config")
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for s in critsense_cli::Scenario::ALL {
        assert!(names.contains(&format!("ok-{}.toml", s.name())), "{s}");
    }
}
