use critsense::analytics::*;
use critsense::quantum::{HilbertSpace, QuantumState};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

/// Real symmetric JC Hamiltonian in the rotating frame, built from scratch.
fn jc_matrix(eps: f64, omega: f64, cutoff: usize) -> DMatrix<f64> {
    let f = cutoff + 1;
    let idx = |q: usize, n: usize| q * f + n;
    let mut h = DMatrix::zeros(2 * f, 2 * f);
    for n in 0..cutoff {
        let s = ((n + 1) as f64).sqrt();
        // a^dag |g><e| couples |e,n> -> |g,n+1>
        h[(idx(0, n + 1), idx(1, n))] += omega * s;
        h[(idx(1, n), idx(0, n + 1))] += omega * s;
        for q in 0..2 {
            h[(idx(q, n + 1), idx(q, n))] += omega * eps * s / 2.0;
            h[(idx(q, n), idx(q, n + 1))] += omega * eps * s / 2.0;
        }
    }
    h
}

#[test]
fn spectrum_matches_quasi_energies() {
    let omega = 2.0 * std::f64::consts::PI * 20.9;
    for eps in [0.0, 0.3, 0.6] {
        let ev = SymmetricEigen::new(jc_matrix(eps, omega, 50)).eigenvalues;
        for n in 1..=3u32 {
            let (plus, minus) = quasi_energies(n, eps, omega).unwrap();
            for e in [plus, minus] {
                let nearest = ev.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
                assert!(nearest / e.abs() < 1e-6, "eps {eps}, n {n}: {nearest}");
            }
        }
        assert!(ev.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min) < 1e-8 * omega);
    }
}

#[test]
fn dark_state_is_the_null_vector() {
    let omega = 1.0;
    let cutoff = 60;
    for eps in [0.2, 0.7, 0.9] {
        let space = HilbertSpace::new(2, cutoff).unwrap();
        let QuantumState::Ket(v) = dark_state_vector(&space, eps).unwrap() else {
            panic!("expected a ket")
        };
        assert!(v.iter().all(|c| c.im.abs() < 1e-12));
        let re = nalgebra::DVector::from_iterator(v.len(), v.iter().map(|c| c.re));
        let r = (jc_matrix(eps, omega, cutoff) * &re).norm();
        assert!(r < 1e-8, "eps {eps}: residual {r}");
        let f = cutoff + 1;
        let pe: f64 = (0..f).map(|n| re[f + n].powi(2)).sum();
        let n_avg: f64 = (0..2).flat_map(|q| (0..f).map(move |n| (q, n))).map(|(q, n)| n as f64 * re[q * f + n].powi(2)).sum();
        assert!((pe - dark_state_pe(eps).unwrap()).abs() < 1e-10);
        assert!((n_avg - mean_photon_dark(eps).unwrap()).abs() < 1e-9, "eps {eps}: {n_avg}");
    }
}

#[test]
fn dark_photon_number_near_criticality() {
    let space = HilbertSpace::new(2, 160).unwrap();
    let QuantumState::Ket(v) = dark_state_vector(&space, 0.99).unwrap() else {
        panic!("expected a ket")
    };
    let f = 161;
    let n_avg: f64 = (0..2 * f).map(|i| (i % f) as f64 * v[i].norm_sqr()).sum();
    assert!((n_avg - mean_photon_dark(0.99).unwrap()).abs() < 1e-9);
    assert!((mean_photon_dark(0.99).unwrap() - 1.30747).abs() < 1e-5);
}

#[test]
fn quoted_values() {
    assert!((dark_state_pe(0.99).unwrap() - 0.429).abs() < 5e-4);
    assert!((ramp_time(0.99, 10.0).unwrap() - 0.70179).abs() < 1e-5);
    assert!((iontrap_pe(0.99, 1.0, 2.0).unwrap() - 0.42946).abs() < 1e-5);
    assert_eq!(iontrap_pe(0.0, 0.1, 5.0).unwrap(), 0.0);
}

#[test]
fn fitted_scale_of_ideal_curve_is_one() {
    let pts: Vec<(f64, f64)> = (1..10).map(|i| {
        let e = i as f64 / 10.0;
        (e, dark_state_pe(e).unwrap())
    }).collect();
    let fit = fit_pe_curve(&pts).unwrap();
    assert!((fit.c - 1.0).abs() < 1e-14 && fit.rms < 1e-15);
}

proptest! {
    #[test]
    fn fisher_is_inverse_gap(eps in 0.0f64..0.999) {
        let f = fisher_classical(eps).unwrap();
        prop_assert!((f * (1.0 - eps * eps) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snr_squared_is_fisher(eps in 0.01f64..0.99) {
        prop_assert!((snr(eps).unwrap().powi(2) / fisher_classical(eps).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ramp_inverts(eps in 0.0f64..0.999, k in 0.1f64..100.0) {
        let t = ramp_time(eps, k).unwrap();
        prop_assert!((ramp_epsilon(t, k) - eps).abs() < 1e-12);
        prop_assert!((fisher_of_time(t, k) - fisher_classical(eps).unwrap()).abs() < 1e-9 * fisher_of_time(t, k));
    }

    #[test]
    fn population_is_bounded(eps in 0.0f64..=1.0) {
        let p = dark_state_pe(eps).unwrap();
        prop_assert!((0.0..=0.5).contains(&p));
    }

    #[test]
    fn gap_closes_as_three_quarter_power(eps in 0.0f64..0.999, n in 1u32..6) {
        let (plus, minus) = quasi_energies(n, eps, 1.0).unwrap();
        prop_assert!((plus + minus).abs() < 1e-15);
        prop_assert!((plus - (n as f64).sqrt() * (1.0 - eps * eps).powf(0.75)).abs() < 1e-12);
    }
}
