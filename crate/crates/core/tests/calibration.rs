use critsense::calibration::*;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

/// `|tr(U^+ V)|^2 / 4` for single-qubit rotations written out by hand.
fn overlap_oracle(phi: f64, d: f64, theta: f64) -> f64 {
    let u = |a: f64| {
        let (c, s) = ((a / 2.0).cos(), (a / 2.0).sin());
        let n = Complex64::new(theta.cos(), theta.sin());
        [[Complex64::new(c, 0.0), Complex64::new(0.0, -s) * n.conj()], [Complex64::new(0.0, -s) * n, Complex64::new(c, 0.0)]]
    };
    let (a, b) = (u(phi), u(phi * (1.0 + d)));
    let mut tr = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for k in 0..2 {
            tr += a[k][i].conj() * b[k][i];
        }
    }
    tr.norm_sqr() / 4.0
}

fn grid(n: usize, end: f64) -> Vec<f64> {
    (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn worked_correction_example() {
    let m = CrosstalkMatrix::from_polar(0.1, PI, 0.0, 0.0).unwrap();
    let v = crosstalk_correct(&m, &DrivePair::real(1.0, 1.0)).unwrap();
    assert!(v.max_diff(&DrivePair::real(1.1, 1.0)) < 1e-12);
}

#[test]
fn gate_infidelity_against_overlap_oracle() {
    for theta in [0.0, 0.7, PI / 2.0] {
        for phi in [PI / 2.0, PI, 1.9 * PI] {
            for d in [0.0, 0.003, 0.01, -0.05, 0.1] {
                let f = gate_infidelity(phi, d, theta).unwrap();
                assert!((f - (1.0 - overlap_oracle(phi, d, theta))).abs() < 1e-12);
                assert!((f - (phi * d / 2.0).sin().powi(2)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sweep_extraction_end_to_end() {
    let drive = 2.0 * PI * 10.0;
    let tau = grid(201, 2.0);
    let offsets: Vec<f64> = (-20..=20).map(|i| i as f64 * 2.0 * PI * 0.1).collect();
    let phases: Vec<f64> = (0..72).map(|i| i as f64 * 2.0 * PI / 72.0).collect();
    for (a, phi) in [(0.05, 0.4), (0.1, 2.0), (0.2, 5.9)] {
        let amp = extract_crosstalk_amplitude(&synthetic_amplitude_sweep(a * drive, &offsets, &tau).unwrap(), drive).unwrap();
        assert!((amp.amplitude - a).abs() < 1e-3 * a, "{amp:?}");
        assert_eq!(amp.offset, 0.0);
        let p = extract_crosstalk_phase(&synthetic_phase_sweep(a * drive, phi, &phases, &tau).unwrap()).unwrap();
        let err = (p - phi + PI).rem_euclid(2.0 * PI) - PI;
        assert!(err.abs() < 2.0 * PI / 72.0 / 4.0, "phase {p} vs {phi}");
    }
}

proptest! {
    #[test]
    fn correction_inverts_crosstalk(
        a12 in 0.0f64..0.95, p12 in -PI..PI, a21 in 0.0f64..0.95, p21 in -PI..PI,
        v in prop::array::uniform4(-2.0f64..2.0),
    ) {
        let m = CrosstalkMatrix::from_polar(a12, p12, a21, p21).unwrap();
        prop_assume!(m.det().norm() > 1e-3);
        let target = DrivePair([Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])]);
        let back = crosstalk_apply(&m, &crosstalk_correct(&m, &target).unwrap());
        prop_assert!(back.max_diff(&target) < 1e-12 / m.det().norm());
    }

    #[test]
    fn infidelity_grows_with_error(a in 0.0f64..0.1, b in 0.0f64..0.1) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(gate_infidelity(PI, lo, 0.0).unwrap() <= gate_infidelity(PI, hi, 0.0).unwrap());
    }
}
