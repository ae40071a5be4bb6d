//! Photon-number tomography from ancilla Rabi signals and drive-strength
//! calibration.
//!
//! Signal model, linear in the photon distribution `P_n`:
//! `P_e(tau) = [1 - pg0 sum_n P_n exp(-kappa_n tau) cos(2 sqrt(n) Omega_A tau)] / 2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default exponent `l` of the photon-number dependent decay.
pub const DEFAULT_DECAY_EXPONENT: f64 = 0.7;

/// Condition numbers above this are rejected by the fit.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct RabiSignal {
    pub tau: Vec<f64>,
    pub pe: Vec<f64>,
    pub omega_a: f64,
    pub pg0: f64,
}

impl RabiSignal {
    pub fn validate(&self) -> Result<()> {
        if self.tau.len() != self.pe.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tau.len(),
                found: self.pe.len(),
            });
        }
        if self.tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("tau must be strictly increasing".into()));
        }
        if let Some(&p) = self.pe.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::OutOfDomain {
                name: "pe",
                value: p,
                domain: "[0, 1]",
            });
        }
        if !(self.omega_a > 0.0) {
            return Err(Error::OutOfDomain {
                name: "omega_a",
                value: self.omega_a,
                domain: "(0, inf)",
            });
        }
        if !(0.0..=1.0).contains(&self.pg0) {
            return Err(Error::OutOfDomain {
                name: "pg0",
                value: self.pg0,
                domain: "[0, 1]",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub probs: Vec<f64>,
}

impl PhotonDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let d = Self { probs };
        d.validate()?;
        Ok(d)
    }

    pub fn vacuum(n_max: usize) -> Self {
        let mut probs = vec![0.0; n_max + 1];
        probs[0] = 1.0;
        Self { probs }
    }

    /// Poisson distribution with mean `mean`, truncated at `n_max` and renormalized.
    pub fn coherent(mean: f64, n_max: usize) -> Result<Self> {
        if !(mean >= 0.0) {
            return Err(Error::OutOfDomain {
                name: "mean",
                value: mean,
                domain: "[0, inf)",
            });
        }
        let mut probs = Vec::with_capacity(n_max + 1);
        let mut term = (-mean).exp();
        for n in 0..=n_max {
            if n > 0 {
                term *= mean / n as f64;
            }
            probs.push(term);
        }
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        Ok(Self { probs })
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::InsufficientData("empty photon distribution".into()));
        }
        if let Some(&p) = self.probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::OutOfDomain {
                name: "P_n",
                value: p,
                domain: "[0, 1]",
            });
        }
        let s: f64 = self.probs.iter().sum();
        if s > 1.0 + 1e-9 {
            return Err(Error::OutOfDomain {
                name: "sum P_n",
                value: s,
                domain: "[0, 1]",
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Total-variation distance, padding the shorter vector with zeros.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..n)
            .map(|i| (get(&self.probs, i) - get(&other.probs, i)).abs())
            .sum::<f64>()
    }
}

/// Decay rate of the `|n>` component, `kappa_n = n^l kappa_fit`, or
/// `n^l / kappa_fit` when `inverse` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayModel {
    pub kappa_fit: f64,
    pub exponent: f64,
    pub inverse: bool,
}

impl DecayModel {
    pub fn new(kappa_fit: f64) -> Self {
        Self {
            kappa_fit,
            exponent: DEFAULT_DECAY_EXPONENT,
            inverse: false,
        }
    }

    pub fn none() -> Self {
        Self::new(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_fit >= 0.0) || (self.inverse && self.kappa_fit == 0.0) {
            return Err(Error::NegativeRate {
                channel: "kappa_fit".into(),
                value: self.kappa_fit,
            });
        }
        Ok(())
    }

    pub fn rate(&self, n: usize) -> f64 {
        let s = (n as f64).powf(self.exponent);
        if self.inverse {
            s / self.kappa_fit
        } else {
            s * self.kappa_fit
        }
    }
}

/// `M[i, n] = pg0 exp(-kappa_n tau_i) cos(2 sqrt(n) Omega_A tau_i)`, so that `1 - 2 P_e = M P`.
pub fn design_matrix(tau: &[f64], n_max: usize, omega_a: f64, decay: &DecayModel, pg0: f64) -> DMatrix<f64> {
    DMatrix::from_fn(tau.len(), n_max + 1, |i, n| {
        let t = tau[i];
        pg0 * (-decay.rate(n) * t).exp() * (2.0 * (n as f64).sqrt() * omega_a * t).cos()
    })
}

pub fn rabi_forward(
    dist: &PhotonDistribution,
    omega_a: f64,
    decay: &DecayModel,
    pg0: f64,
    tau: &[f64],
) -> Result<RabiSignal> {
    dist.validate()?;
    decay.validate()?;
    let m = design_matrix(tau, dist.n_max(), omega_a, decay, pg0);
    let c = &m * DVector::from_column_slice(&dist.probs);
    let signal = RabiSignal {
        tau: tau.to_vec(),
        pe: c.iter().map(|x| (0.5 * (1.0 - x)).clamp(0.0, 1.0)).collect(),
        omega_a,
        pg0,
    };
    signal.validate()?;
    Ok(signal)
}

/// Lawson-Hanson active-set solution of `min ||A x - b||` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    let tol = 10.0 * f64::EPSILON * a.norm() * (m.max(n) as f64);
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;

    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(m, idx.len(), |i, k| a[(i, idx[k])]);
        let zs = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .map_err(|e| Error::Model(format!("least squares failed: {e}")))?;
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = zs[k];
        }
        Ok(z)
    };

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]));
        let Some(j) = candidate else {
            return Ok(x);
        };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive)?;
            if (0..n).filter(|&k| passive[k]).all(|k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in (0..n).filter(|&k| passive[k] && z[k] <= 0.0) {
                alpha = alpha.min(x[k] / (x[k] - z[k]));
            }
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    Err(Error::Model("NNLS did not converge".into()))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonFit {
    pub distribution: PhotonDistribution,
    /// `||M P - (1 - 2 P_e)||` before renormalization.
    pub residual_norm: f64,
    pub condition: f64,
    /// Sum of the fitted probabilities before renormalization.
    pub raw_sum: f64,
}

/// Non-negative least-squares fit of `P_0..P_{n_max}` to a Rabi signal with
/// `Omega_A` and the decay model known, followed by renormalization.
pub fn fit_photon_distribution(signal: &RabiSignal, n_max: usize, decay: &DecayModel) -> Result<PhotonFit> {
    signal.validate()?;
    decay.validate()?;
    let need = 3 * (n_max + 1);
    if signal.tau.len() < need {
        return Err(Error::InsufficientData(format!(
            "{} samples for n_max = {n_max}, need at least {need}",
            signal.tau.len()
        )));
    }
    let span = signal.tau[signal.tau.len() - 1] - signal.tau[0];
    let slowest_period = std::f64::consts::PI / signal.omega_a;
    if span < 2.0 * slowest_period {
        return Err(Error::InsufficientData(format!(
            "tau span {span:.6e} us is shorter than two periods ({:.6e} us) of the one-photon component",
            2.0 * slowest_period
        )));
    }
    let m = design_matrix(&signal.tau, n_max, signal.omega_a, decay, signal.pg0);
    let condition = condition_number(&m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let b = DVector::from_iterator(signal.pe.len(), signal.pe.iter().map(|p| 1.0 - 2.0 * p));
    let x = nnls(&m, &b)?;
    let residual_norm = (&m * &x - &b).norm();
    let raw_sum = x.sum();
    if !(raw_sum > 0.0) {
        return Err(Error::Degenerate("fitted distribution is identically zero".into()));
    }
    Ok(PhotonFit {
        distribution: PhotonDistribution {
            probs: x.iter().map(|p| p / raw_sum).collect(),
        },
        residual_norm,
        condition,
        raw_sum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveCalibration {
    /// `G = slope * xi` (1/us per amplitude unit).
    pub slope: f64,
    /// Per-point drive strength `|alpha| / tau`.
    pub strengths: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Least-squares line through the origin of `G_i = |alpha_i| / tau` against pulse amplitude.
pub fn calibrate_drive_strength(points: &[(f64, f64)], tau: f64) -> Result<DriveCalibration> {
    if !(tau > 0.0) {
        return Err(Error::OutOfDomain {
            name: "tau",
            value: tau,
            domain: "(0, inf)",
        });
    }
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "drive calibration needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(Error::Degenerate("all pulse amplitudes are identical".into()));
    }
    let strengths: Vec<f64> = points.iter().map(|&(_, a)| a / tau).collect();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().zip(&strengths).map(|(p, g)| p.0 * g).sum();
    let slope = sxy / sxx;
    let residuals = points.iter().zip(&strengths).map(|(p, g)| g - slope * p.0).collect();
    Ok(DriveCalibration {
        slope,
        strengths,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, end: f64) -> Vec<f64> {
        (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn forward_special_cases() {
        let tau = grid(50, 1.0);
        let vac = rabi_forward(&PhotonDistribution::vacuum(3), 5.0, &DecayModel::new(0.3), 1.0, &tau).unwrap();
        assert!(vac.pe.iter().all(|&p| p.abs() < 1e-15));

        let one = PhotonDistribution::new(vec![0.0, 1.0]).unwrap();
        let om = 2.0 * PI;
        let s = rabi_forward(&one, om, &DecayModel::none(), 1.0, &tau).unwrap();
        for (t, p) in s.tau.iter().zip(&s.pe) {
            assert!((p - 0.5 * (1.0 - (2.0 * om * t).cos())).abs() < 1e-14);
        }
        let peak = rabi_forward(&one, om, &DecayModel::none(), 1.0, &[PI / (2.0 * om)]).unwrap();
        assert!((peak.pe[0] - 1.0).abs() < 1e-14);

        let flat = rabi_forward(&PhotonDistribution::coherent(1.0, 5).unwrap(), om, &DecayModel::new(0.1), 0.0, &tau).unwrap();
        assert!(flat.pe.iter().all(|&p| p == 0.5));
        let mut bad = DecayModel::new(-1.0);
        assert!(rabi_forward(&one, om, &bad, 1.0, &tau).is_err());
        bad.kappa_fit = 0.0;
        bad.inverse = true;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn decay_readings() {
        let d = DecayModel::new(0.08);
        assert!((d.rate(4) - 4f64.powf(0.7) * 0.08).abs() < 1e-15);
        let inv = DecayModel { inverse: true, ..d };
        assert!((inv.rate(4) - 4f64.powf(0.7) / 0.08).abs() < 1e-12);
        assert_eq!(d.rate(0), 0.0);
    }

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let x0 = DVector::from_vec(vec![0.3, 0.7]);
        let b = &a * &x0;
        let x = nnls(&a, &b).unwrap();
        assert!((x - x0).norm() < 1e-12);
    }

    #[test]
    fn nnls_clamps_negative_direction() {
        // unconstrained optimum is (1, -1); constrained optimum has x2 = 0
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let x = nnls(&a, &b).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1] == 0.0);
    }

    #[test]
    fn fit_round_trip_coherent() {
        let dist = PhotonDistribution::coherent(1.0, 7).unwrap();
        let tau = grid(200, 2.0);
        let decay = DecayModel::new(0.08);
        let s = rabi_forward(&dist, 2.0 * PI * 5.0, &decay, 0.95, &tau).unwrap();
        let fit = fit_photon_distribution(&s, 7, &decay).unwrap();
        assert!(fit.distribution.tv_distance(&dist) < 1e-6);
        let vac = rabi_forward(&PhotonDistribution::vacuum(7), 2.0 * PI * 5.0, &decay, 0.95, &tau).unwrap();
        let fv = fit_photon_distribution(&vac, 7, &decay).unwrap();
        assert!((fv.distribution.probs[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_preconditions() {
        let dist = PhotonDistribution::coherent(1.0, 7).unwrap();
        let om = 2.0 * PI * 5.0;
        let decay = DecayModel::new(0.08);
        let few = rabi_forward(&dist, om, &decay, 1.0, &grid(20, 2.0)).unwrap();
        assert!(matches!(fit_photon_distribution(&few, 7, &decay), Err(Error::InsufficientData(_))));
        let short = rabi_forward(&dist, om, &decay, 1.0, &grid(100, 0.1)).unwrap();
        assert!(matches!(fit_photon_distribution(&short, 7, &decay), Err(Error::InsufficientData(_))));
        // components with n = 1 and n = 4 share no frequency but the grid aliases them
        let aliased: Vec<f64> = (0..60).map(|i| i as f64 * PI / om).collect();
        let s = rabi_forward(&dist, om, &DecayModel::none(), 1.0, &aliased).unwrap();
        assert!(matches!(fit_photon_distribution(&s, 7, &DecayModel::none()), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn drive_calibration() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.5, 0.9].iter().map(|&x| (x, 2.0 * x * 0.3)).collect();
        let c = calibrate_drive_strength(&pts, 0.3).unwrap();
        assert!((c.slope - 2.0).abs() < 1e-12);
        let one = calibrate_drive_strength(&[(0.5, 1.0), (1.0, 2.0)], 0.1).unwrap();
        assert!((one.strengths[0] - 10.0).abs() < 1e-12);
        assert!(calibrate_drive_strength(&[(0.5, 1.0)], 0.1).is_err());
        assert!(calibrate_drive_strength(&[(0.5, 1.0), (0.5, 1.1)], 0.1).is_err());
        assert!(calibrate_drive_strength(&pts, 0.0).is_err());
    }

    #[test]
    fn tv_and_coherent() {
        let a = PhotonDistribution::coherent(2.0, 30).unwrap();
        assert!((a.mean() - 2.0).abs() < 1e-9);
        assert_eq!(a.tv_distance(&a), 0.0);
        let v = PhotonDistribution::vacuum(2);
        assert!((v.tv_distance(&PhotonDistribution::new(vec![0.0, 1.0]).unwrap()) - 1.0).abs() < 1e-15);
        assert!(PhotonDistribution::new(vec![0.7, 0.7]).is_err());
        assert!(PhotonDistribution::new(vec![-0.1, 0.7]).is_err());
    }
}
