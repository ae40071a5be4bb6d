use critsense::calibration::SweepTrace;
use critsense::io::*;
use critsense::lindblad::TrajectoryRecord;
use critsense::protocols::{Axis, ScanResult};
use critsense::readout::{PhotonDistribution, RabiSignal};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

fn record(v: [f64; 8]) -> TrajectoryRecord {
    TrajectoryRecord {
        t: v[0],
        epsilon: v[1],
        p_g: v[2],
        p_e: v[3],
        p_f: v[4],
        n_avg: v[5],
        fidelity: v[6],
        trace: v[7],
        purity: f64::NAN,
        hermiticity_defect: f64::NAN,
        min_eigenvalue: f64::NAN,
    }
}

#[test]
fn scan_layout() {
    let scan = ScanResult {
        title: "demo".into(),
        axes: vec![Axis::new("x", vec![1.0, 2.0]), Axis::new("y", vec![0.5, 0.25, 0.125])],
        quantities: vec!["q".into()],
        values: vec![(0..6).map(|i| i as f64).collect()],
        flags: Some(("small".into(), vec![true, true, false, false, false, false])),
        metadata: vec![("model".into(), "jc2".into())],
    };
    let mut buf = Vec::new();
    write_scan(&mut buf, &scan).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# demo");
    assert_eq!(lines[1], "# model = jc2");
    assert_eq!(lines[2], "x,y,q,small");
    assert_eq!(lines[3], "1.000000000000000e0,5.000000000000000e-1,0.000000000000000e0,1");
    assert_eq!(lines.len(), 9);

    let mut m = Vec::new();
    write_gnuplot_matrix(&mut m, &scan, "q").unwrap();
    let m = String::from_utf8(m).unwrap();
    assert_eq!(m.lines().count(), 3);
    assert!(m.starts_with("3 5.000000000000000e-1"));
}

#[test]
fn significant_digits() {
    let x = 0.123_456_789_012_345_68;
    assert!(fmt_num(x).starts_with("1.234567890123457e-1"));
    assert!(fmt_num(x).parse::<f64>().unwrap() - x < 1e-16);
}

proptest! {
    #[test]
    fn trajectory_round_trip(rows in prop::collection::vec(prop::array::uniform8(-1e6f64..1e6), 0..20)) {
        let recs: Vec<TrajectoryRecord> = rows.iter().map(|r| record(*r)).collect();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &recs).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            prop_assert!(close(a.t, b.t) && close(a.p_e, b.p_e) && close(a.trace, b.trace) && close(a.n_avg, b.n_avg));
        }
    }

    #[test]
    fn rabi_and_photon_round_trip(pe in prop::collection::vec(0.0f64..=1.0, 1..40), w in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let s = RabiSignal { tau: (0..pe.len()).map(|i| i as f64 * 0.01).collect(), pe, omega_a: 3.0, pg0: 0.9 };
        let mut buf = Vec::new();
        write_rabi_signal(&mut buf, &s).unwrap();
        let back = read_rabi_signal(buf.as_slice(), 3.0, 0.9).unwrap();
        prop_assert!(back.pe.iter().zip(&s.pe).all(|(a, b)| close(*a, *b)));

        let sum: f64 = w.iter().sum();
        prop_assume!(sum > 1e-6);
        let d = PhotonDistribution::new(w.iter().map(|x| x / sum).collect()).unwrap();
        let mut buf = Vec::new();
        write_photon_distribution(&mut buf, &d).unwrap();
        let back = read_photon_distribution(buf.as_slice()).unwrap();
        prop_assert!(back.tv_distance(&d) < 1e-14);
    }

    #[test]
    fn sweep_round_trip(settings in prop::collection::btree_set(-1000i32..1000, 1..6), n in 1usize..10) {
        let sweep: Vec<SweepTrace> = settings.iter().map(|&s| SweepTrace {
            setting: s as f64 * 0.1,
            tau: (0..n).map(|i| i as f64 * 0.05).collect(),
            pe: (0..n).map(|i| (i as f64 * 0.3).sin().powi(2)).collect(),
        }).collect();
        let mut buf = Vec::new();
        write_sweep(&mut buf, SWEEP_HEADER, &sweep).unwrap();
        let back = read_sweep(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), sweep.len());
        for (a, b) in sweep.iter().zip(&back) {
            prop_assert!(close(a.setting, b.setting) && a.tau.len() == b.tau.len());
        }
    }

    #[test]
    fn readers_reject_garbage_without_panicking(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = read_trajectory(bytes.as_slice());
        let _ = read_rabi_signal(bytes.as_slice(), 1.0, 1.0);
        let _ = read_photon_distribution(bytes.as_slice());
        let _ = read_sweep(bytes.as_slice());
    }

    #[test]
    fn readers_survive_csv_shaped_noise(lines in prop::collection::vec("[-0-9.eE,NaN#a-z_ ]{0,30}", 0..8)) {
        for header in ["t_us,epsilon,P_g,P_e,P_f,n_avg,fidelity,trace", "tau_us,pe", "n,p", "offset_rad_per_us,tau_us,pe"] {
            let text = format!("{header}\n{}", lines.join("\n"));
            let _ = read_trajectory(text.as_bytes());
            let _ = read_rabi_signal(text.as_bytes(), 1.0, 1.0);
            let _ = read_photon_distribution(text.as_bytes());
            let _ = read_sweep(text.as_bytes());
        }
    }
}
