//! XY-crosstalk correction, crosstalk extraction from Rabi sweeps and
//! single-qubit gate infidelity under drive-amplitude miscalibration.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantum::{matrix_exp, CMatrix, C0, C1, CI};

/// Smallest `|det M|` accepted by [`crosstalk_correct`].
pub const SINGULAR_DET: f64 = 1e-9;

/// Maximum excitation below which a sweep is treated as carrying no crosstalk.
pub const DETECTION_FLOOR: f64 = 1e-6;

/// `[[1, m12], [m21, 1]]`, with `m_jk = A_jk exp(i phi_jk)` the crosstalk of line `k` onto qubit `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkMatrix {
    pub m12: Complex64,
    pub m21: Complex64,
}

impl CrosstalkMatrix {
    pub fn identity() -> Self {
        Self { m12: C0, m21: C0 }
    }

    pub fn from_polar(a12: f64, phi12: f64, a21: f64, phi21: f64) -> Result<Self> {
        let m = Self {
            m12: Complex64::from_polar(a12, phi12),
            m21: Complex64::from_polar(a21, phi21),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, z) in [("A12", self.m12), ("A21", self.m21)] {
            if !(z.norm() < 1.0) {
                return Err(Error::OutOfDomain {
                    name,
                    value: z.norm(),
                    domain: "[0, 1)",
                });
            }
        }
        Ok(())
    }

    pub fn det(&self) -> Complex64 {
        C1 - self.m12 * self.m21
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePair(pub [Complex64; 2]);

impl DrivePair {
    pub fn real(a: f64, b: f64) -> Self {
        Self([Complex64::new(a, 0.0), Complex64::new(b, 0.0)])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self([self.0[0] * s, self.0[1] * s])
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        (self.0[0] - other.0[0]).norm().max((self.0[1] - other.0[1]).norm())
    }
}

/// Drive actually seen by the qubits, `M v`.
pub fn crosstalk_apply(m: &CrosstalkMatrix, v: &DrivePair) -> DrivePair {
    let [a, b] = v.0;
    DrivePair([a + m.m12 * b, m.m21 * a + b])
}

/// Pulses to program so that the qubits see `v_desired`, `M^-1 v_desired`.
pub fn crosstalk_correct(m: &CrosstalkMatrix, v_desired: &DrivePair) -> Result<DrivePair> {
    let det = m.det();
    if det.norm() <= SINGULAR_DET {
        return Err(Error::Singular(det.norm()));
    }
    let [a, b] = v_desired.0;
    Ok(DrivePair([(a - m.m12 * b) / det, (b - m.m21 * a) / det]))
}

/// Excited-state population of a two-level qubit starting in `|g>` under a
/// drive of complex Rabi rate `drive` detuned by `offset` (rad/us):
/// `H = [[0, drive*/2], [drive/2, -offset]]` in the frame of the drive.
pub fn driven_qubit_pe(drive: Complex64, offset: f64, tau: &[f64]) -> Result<Vec<f64>> {
    let h = CMatrix::from_row_slice(
        2,
        2,
        &[C0, drive.conj() * 0.5, drive * 0.5, Complex64::new(-offset, 0.0)],
    );
    tau.iter()
        .map(|&t| {
            let u = matrix_exp(&(&h * (-CI * t)))?;
            Ok(u[(1, 0)].norm_sqr())
        })
        .collect()
}

/// One Rabi trace of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    /// Drive frequency offset (rad/us) or cancellation phase (rad).
    pub setting: f64,
    pub tau: Vec<f64>,
    pub pe: Vec<f64>,
}

/// Rabi traces of a qubit driven only through crosstalk of strength
/// `crosstalk_rate` (rad/us), one per drive-frequency offset.
pub fn synthetic_amplitude_sweep(crosstalk_rate: f64, offsets: &[f64], tau: &[f64]) -> Result<Vec<SweepTrace>> {
    offsets
        .iter()
        .map(|&o| {
            Ok(SweepTrace {
                setting: o,
                tau: tau.to_vec(),
                pe: driven_qubit_pe(Complex64::new(crosstalk_rate, 0.0), o, tau)?,
            })
        })
        .collect()
}

/// Resonant traces with the neighbouring line driven at phase `pi` and a
/// cancellation pulse of matched strength at each phase of `phases`; the
/// qubit sees `rate (exp(i phase) - exp(i phi_ct))`.
pub fn synthetic_phase_sweep(
    crosstalk_rate: f64,
    crosstalk_phase: f64,
    phases: &[f64],
    tau: &[f64],
) -> Result<Vec<SweepTrace>> {
    phases
        .iter()
        .map(|&p| {
            let drive = (Complex64::from_polar(1.0, p) - Complex64::from_polar(1.0, crosstalk_phase)) * crosstalk_rate;
            Ok(SweepTrace {
                setting: p,
                tau: tau.to_vec(),
                pe: driven_qubit_pe(drive, 0.0, tau)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiFit {
    /// `w` in `c sin^2(w tau / 2)`.
    pub rate: f64,
    pub contrast: f64,
    pub sse: f64,
}

fn sse_at(tau: &[f64], pe: &[f64], w: f64) -> (f64, f64) {
    let basis: Vec<f64> = tau.iter().map(|t| (w * t / 2.0).sin().powi(2)).collect();
    let bb: f64 = basis.iter().map(|b| b * b).sum();
    let c = if bb > 0.0 {
        basis.iter().zip(pe).map(|(b, p)| b * p).sum::<f64>() / bb
    } else {
        0.0
    };
    let sse = basis.iter().zip(pe).map(|(b, p)| (c * b - p).powi(2)).sum();
    (c, sse)
}

/// Least-squares fit of `c sin^2(w tau / 2)`: a grid search over `w` up to the
/// Nyquist rate, refined by golden-section search.
pub fn fit_rabi_rate(tau: &[f64], pe: &[f64]) -> Result<RabiFit> {
    if tau.len() < 4 || tau.len() != pe.len() {
        return Err(Error::InsufficientData("a Rabi fit needs at least 4 samples".into()));
    }
    let span = tau[tau.len() - 1] - tau[0];
    let dt = tau.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(span > 0.0) || !(dt > 0.0) {
        return Err(Error::Parse("tau must be strictly increasing".into()));
    }
    // sin^2(w t / 2) oscillates at w, so w above pi / dt aliases onto the grid
    let w_max = std::f64::consts::PI / dt;
    let steps = 8 * tau.len();
    let dw = w_max / steps as f64;
    let (mut best, mut best_sse) = (dw, f64::INFINITY);
    for i in 1..=steps {
        let w = i as f64 * dw;
        let (_, s) = sse_at(tau, pe, w);
        if s < best_sse {
            best = w;
            best_sse = s;
        }
    }
    let (mut a, mut b) = ((best - dw).max(dw * 1e-3), best + dw);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = sse_at(tau, pe, x1).1;
    let mut f2 = sse_at(tau, pe, x2).1;
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = sse_at(tau, pe, x1).1;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = sse_at(tau, pe, x2).1;
        }
        if b - a < 1e-12 * b {
            break;
        }
    }
    let rate = 0.5 * (a + b);
    let (contrast, sse) = sse_at(tau, pe, rate);
    Ok(RabiFit { rate, contrast, sse })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkAmplitude {
    /// Slowest fitted Rabi rate across the sweep (rad/us); zero when below the floor.
    pub rate: f64,
    /// `rate / drive_rate`, the crosstalk amplitude `A`.
    pub amplitude: f64,
    /// Offset of the slowest trace.
    pub offset: f64,
    pub below_floor: bool,
}

/// Crosstalk amplitude from a frequency-offset sweep: the slowest generalized
/// Rabi oscillation across offsets. `drive_rate` is the Rabi rate the same
/// pulse produces on its own qubit.
pub fn extract_crosstalk_amplitude(sweep: &[SweepTrace], drive_rate: f64) -> Result<CrosstalkAmplitude> {
    if sweep.len() < 3 {
        return Err(Error::InsufficientData("amplitude sweep needs at least 3 offsets".into()));
    }
    let peak = sweep
        .iter()
        .flat_map(|s| s.pe.iter().copied())
        .fold(0.0, f64::max);
    if peak < DETECTION_FLOOR {
        return Ok(CrosstalkAmplitude {
            rate: 0.0,
            amplitude: 0.0,
            offset: f64::NAN,
            below_floor: true,
        });
    }
    let fits: Vec<RabiFit> = sweep
        .iter()
        .map(|s| fit_rabi_rate(&s.tau, &s.pe))
        .collect::<Result<_>>()?;
    let i = (0..fits.len())
        .min_by(|&a, &b| fits[a].rate.total_cmp(&fits[b].rate))
        .expect("non-empty");
    if i == 0 || i == fits.len() - 1 {
        return Err(Error::NoMinimum(format!(
            "slowest oscillation at the sweep edge (offset {})",
            sweep[i].setting
        )));
    }
    Ok(CrosstalkAmplitude {
        rate: fits[i].rate,
        amplitude: fits[i].rate / drive_rate,
        offset: sweep[i].setting,
        below_floor: false,
    })
}

/// Crosstalk phase from a cancellation-phase sweep: the phase whose trace has
/// the smallest maximum excitation, refined by a parabola through the
/// neighbouring points. A sweep covering the full circle wraps around.
pub fn extract_crosstalk_phase(sweep: &[SweepTrace]) -> Result<f64> {
    let n = sweep.len();
    if n < 3 {
        return Err(Error::InsufficientData("phase sweep needs at least 3 phases".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let x: Vec<f64> = sweep.iter().map(|s| s.setting).collect();
    let y: Vec<f64> = sweep.iter().map(|s| s.pe.iter().copied().fold(0.0, f64::max)).collect();
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    let circular = (x[n - 1] - x[0] + step) >= two_pi - 1e-9;
    let i = (0..n).min_by(|&a, &b| y[a].total_cmp(&y[b])).expect("non-empty");
    let (l, r) = if i > 0 && i < n - 1 {
        (i - 1, i + 1)
    } else if !circular {
        return Err(Error::NoMinimum(format!("least excitation at the sweep edge (phase {})", x[i])));
    } else if i == 0 {
        (n - 1, 1)
    } else {
        (n - 2, 0)
    };
    let (ym, y0, yp) = (y[l], y[i], y[r]);
    let denom = ym - 2.0 * y0 + yp;
    let shift = if denom > 0.0 { 0.5 * (ym - yp) / denom } else { 0.0 };
    let phase = x[i] + shift.clamp(-1.0, 1.0) * step;
    Ok(phase.rem_euclid(two_pi))
}

const PAULI: [[Complex64; 4]; 4] = [
    [C1, C0, C0, C1],
    [C0, C1, C1, C0],
    [C0, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), C0],
    [C1, C0, C0, Complex64::new(-1.0, 0.0)],
];

/// `I, X, Y, Z` as 2x2 matrices.
pub fn pauli(i: usize) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &PAULI[i])
}

/// `R_n(phi) = exp(-i phi sigma_n / 2)` about `n = (cos theta, sin theta, 0)`.
pub fn rotation(phi: f64, theta: f64) -> Result<CMatrix> {
    let sn = pauli(1) * Complex64::new(theta.cos(), 0.0) + pauli(2) * Complex64::new(theta.sin(), 0.0);
    matrix_exp(&(sn * Complex64::new(0.0, -phi / 2.0)))
}

/// Process (chi) matrix in the Pauli basis of the unitary channel `rho -> U rho U^+`,
/// built from the channel's Choi matrix `C = sum_ij |i><j| (x) U |i><j| U^+`
/// as `chi_mn = <<P_m| C |P_n>> / 4`.
pub fn chi_matrix(u: &CMatrix) -> CMatrix {
    let mut choi = CMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let mut e = CMatrix::zeros(2, 2);
            e[(i, j)] = C1;
            let out = u * e * u.adjoint();
            for a in 0..2 {
                for b in 0..2 {
                    choi[(2 * i + a, 2 * j + b)] = out[(a, b)];
                }
            }
        }
    }
    let vecs: Vec<Vec<Complex64>> = (0..4)
        .map(|m| {
            let p = pauli(m);
            // row-stacked vec, matching the |i>|a> ordering of the Choi matrix
            (0..4).map(|k| p[(k / 2, k % 2)]).collect()
        })
        .collect();
    CMatrix::from_fn(4, 4, |m, n| {
        let mut acc = C0;
        for r in 0..4 {
            for c in 0..4 {
                acc += vecs[m][r].conj() * choi[(r, c)] * vecs[n][c];
            }
        }
        acc / 4.0
    })
}

/// `tr(chi_a chi_b)`.
pub fn process_fidelity(chi_a: &CMatrix, chi_b: &CMatrix) -> f64 {
    (chi_a * chi_b).trace().re
}

/// `1 - F_p` between the ideal rotation `R_n(phi)` and the miscalibrated `R_n(phi (1 + delta_eps))`.
pub fn gate_infidelity(phi: f64, delta_eps: f64, theta: f64) -> Result<f64> {
    if !(0.0..=2.0 * std::f64::consts::PI).contains(&phi) {
        return Err(Error::OutOfDomain {
            name: "phi",
            value: phi,
            domain: "[0, 2 pi]",
        });
    }
    if !(delta_eps.abs() < 1.0) {
        return Err(Error::OutOfDomain {
            name: "delta_eps",
            value: delta_eps,
            domain: "(-1, 1)",
        });
    }
    let ideal = chi_matrix(&rotation(phi, theta)?);
    let actual = chi_matrix(&rotation(phi * (1.0 + delta_eps), theta)?);
    Ok(1.0 - process_fidelity(&ideal, &actual))
}
