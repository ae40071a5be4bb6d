use std::fs;
use std::path::Path;
use std::process::Command;

use critsense::analytics::{fisher_classical, SystemParams};
use critsense::io::read_trajectory;
use critsense::lindblad::ModelKind;
use critsense::protocols::{run_quench, QuenchSpec};
use critsense_cli::{parse_config, run, EXIT_CONFIG, EXIT_NUMERICAL, MANIFEST};

const QUENCH: &str = r#"
scenario = "fig2-quench"
[settings]
epsilon_target = 0.9
fock_cutoff = 16
epsilon_step = 0.01
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_critsense"))
}

fn listed(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn quench_outputs_match_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(QUENCH).unwrap();
    let entries = run(&c, dir.path(), 1).unwrap();
    let names: Vec<&str> = entries.iter().map(|e| e.file.as_str()).collect();
    assert_eq!(names, ["trajectory.csv", "dark_state_comparison.csv", "ramp.csv"]);

    let from_file = read_trajectory(fs::File::open(dir.path().join("trajectory.csv")).unwrap()).unwrap();
    let direct = run_quench(&QuenchSpec::new(ModelKind::Jc2, SystemParams::device(), 0.9).cutoff(16).step(0.01)).unwrap();
    assert_eq!(from_file.len(), direct.records.len());
    for (a, b) in from_file.iter().zip(&direct.records) {
        assert!((a.p_e - b.p_e).abs() <= 1e-15 * b.p_e.abs().max(1e-300) + 1e-300);
        assert!((a.epsilon - b.epsilon).abs() < 1e-15);
    }

    let mut expected = names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    expected.push(MANIFEST.into());
    expected.sort();
    assert_eq!(listed(dir.path()), expected);
}

#[test]
fn repeated_runs_hash_identically() {
    let c = parse_config(QUENCH).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&c, a.path(), 1).unwrap();
    run(&c, b.path(), 0).unwrap();
    let ma = fs::read(a.path().join(MANIFEST)).unwrap();
    assert_eq!(ma, fs::read(b.path().join(MANIFEST)).unwrap());
    // the manifest is sha256sum-compatible
    let text = String::from_utf8(ma).unwrap();
    for line in text.lines() {
        let (hash, file) = line.split_once("  ").unwrap();
        assert_eq!(hash.len(), 64);
        assert!(a.path().join(file).is_file());
    }
}

#[test]
fn fisher_scan_columns() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(
        r#"
        scenario = "fisher-scan"
        [settings]
        epsilon = [0.3, 0.4, 0.5, 0.6]
        fock_cutoff = 14
        derivative = "fit"
        "#,
    )
    .unwrap();
    run(&c, dir.path(), 1).unwrap();
    let text = fs::read_to_string(dir.path().join("fisher.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epsilon,F_analytic,F_simulated"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - fisher_classical(v[0]).unwrap()).abs() < 1e-12);
        assert!(v[2] > 0.0 && (v[2] / v[1] - 1.0).abs() < 0.2, "{line}");
    }
}

#[test]
fn cheap_scenarios_run() {
    for s in ["iontrap", "figS11-gate", "rabi-compare", "figS6-crosstalk", "figS7-drive", "figS8-tomography"] {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_config(&format!("scenario = \"{s}\"")).unwrap();
        let entries = run(&c, dir.path(), 1).unwrap_or_else(|e| panic!("{s}: {e}"));
        assert!(!entries.is_empty());
        for e in entries {
            let text = fs::read_to_string(dir.path().join(&e.file)).unwrap();
            let bad = text
                .lines()
                .filter(|l| !l.starts_with('#'))
                .flat_map(|l| l.split(','))
                .filter_map(|c| c.trim().parse::<f64>().ok())
                .any(|x| !x.is_finite());
            assert!(!bad, "{s}/{}", e.file);
        }
    }
}

#[test]
fn binary_exit_codes_and_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");

    fs::write(&cfg, "scenario = \"fig2-quench\"\n[settings]\nepsilon_target = 1.0\n").unwrap();
    let st = bin().args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&st.stderr).contains("settings.epsilon_target"));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(rec["kind"], "config");

    // too few Rabi samples for the requested n_max
    fs::write(&cfg, "scenario = \"figS8-tomography\"\n[settings]\ntau = { start = 0, stop = 1, count = 12 }\n").unwrap();
    let st = bin().args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_NUMERICAL));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(rec["kind"], "numerical");
    assert_eq!(rec["scenario"], "figS8-tomography");
    assert_eq!(rec["exit_code"], EXIT_NUMERICAL);

    fs::write(&cfg, "scenario = \"iontrap\"\n").unwrap();
    let st = bin().args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(!out.join("error.json").exists());

    let st = bin().arg("--list-scenarios").output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let text = String::from_utf8(st.stdout).unwrap();
    for s in critsense_cli::Scenario::ALL {
        assert!(text.contains(s.name()));
    }
}
