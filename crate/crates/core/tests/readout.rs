use critsense::readout::*;
use critsense::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive NNLS: best unconstrained solution over every support that is feasible.
fn brute_force_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let mut best = b.norm();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])]);
        let Ok(x) = sub.clone().svd(true, true).solve(b, 1e-14) else { continue };
        if x.iter().all(|&v| v >= -1e-12) {
            best = best.min((&sub * x - b).norm());
        }
    }
    best
}

fn random_distribution(rng: &mut ChaCha8Rng, n_max: usize) -> PhotonDistribution {
    let w: Vec<f64> = (0..=n_max).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() }).collect();
    let s: f64 = w.iter().sum::<f64>().max(1e-300);
    let p = if s > 1e-12 { w.iter().map(|x| x / s).collect() } else { PhotonDistribution::vacuum(n_max).probs };
    PhotonDistribution::new(p).unwrap()
}

fn grid(n: usize, end: f64) -> Vec<f64> {
    (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn nnls_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let a = DMatrix::from_fn(7, 4, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
        let x = nnls(&a, &b).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        let r = (&a * &x - &b).norm();
        assert!((r - brute_force_nnls(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn noise_free_round_trip_with_decay() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let omega_a = 2.0 * std::f64::consts::PI * 20.9;
    let tau = grid(240, 1.2);
    for n_max in [3usize, 6, 10] {
        for decay in [DecayModel::none(), DecayModel::new(0.4)] {
            let truth = random_distribution(&mut rng, n_max);
            let s = rabi_forward(&truth, omega_a, &decay, 0.97, &tau).unwrap();
            let fit = fit_photon_distribution(&s, n_max, &decay).unwrap();
            assert!(fit.distribution.tv_distance(&truth) < 1e-6, "n_max {n_max}");
            assert!((fit.raw_sum - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn too_few_samples_or_too_short_span() {
    let omega_a = 10.0;
    let d = PhotonDistribution::coherent(0.5, 4).unwrap();
    let short = rabi_forward(&d, omega_a, &DecayModel::none(), 1.0, &grid(40, 0.05)).unwrap();
    assert!(matches!(fit_photon_distribution(&short, 4, &DecayModel::none()), Err(Error::InsufficientData(_))));
    let sparse = rabi_forward(&d, omega_a, &DecayModel::none(), 1.0, &grid(10, 3.0)).unwrap();
    assert!(matches!(fit_photon_distribution(&sparse, 4, &DecayModel::none()), Err(Error::InsufficientData(_))));
}

#[test]
fn drive_strength_from_coherent_states() {
    let (slope, tau) = (12.5, 0.1);
    let points: Vec<(f64, f64)> = [0.2, 0.4, 0.6, 0.8].iter().map(|&x| (x, slope * x * tau)).collect();
    let cal = calibrate_drive_strength(&points, tau).unwrap();
    assert!((cal.slope - slope).abs() < 1e-12);
    assert!(cal.residuals.iter().all(|r| r.abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fitted_distribution_is_a_distribution(seed in any::<u64>(), n_max in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_distribution(&mut rng, n_max);
        let tau = grid(120, 1.0);
        let mut s = rabi_forward(&truth, 60.0, &DecayModel::none(), 1.0, &tau).unwrap();
        for p in &mut s.pe {
            *p = (*p + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
        }
        let fit = fit_photon_distribution(&s, n_max, &DecayModel::none()).unwrap();
        prop_assert!(fit.distribution.probs.iter().all(|&p| p >= 0.0));
        prop_assert!((fit.distribution.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
