//! Closed-form results for the driven Jaynes-Cummings model
//! `H = Omega [(a_dag |g><e| + a |e><g|) + eps (a_dag + a) / 2]`.
//!
//! Below the critical drive (`eps < 1`) the spectrum is `E_0 = 0`,
//! `E_{n,+-} = +-sqrt(n) Omega A^{3/4}` with `A = 1 - eps^2`. The dark state is
//! `S(r)|0> (c+ |g> - c- |e>)` with `r = ln(A) / 4` and
//! `c+- = sqrt((1 +- sqrt(A)) / 2)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lindblad::build_hamiltonian_jc2;
use crate::quantum::{
    build_operators, displace, squeeze, CVector, HilbertSpace, QuantumState, EXCITED, GROUND,
};

/// Physical parameters. Every frequency-like field is in 1/us; coherent
/// couplings and detunings are angular (rad/us).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Qubit-resonator coupling.
    pub omega: f64,
    /// Ramp coefficient.
    pub k: f64,
    /// Qubit energy decay rate.
    pub kappa_q: f64,
    /// Resonator decay rate.
    pub kappa_r: f64,
    /// Qubit dephasing rate.
    pub gamma_q: f64,
    /// Qutrit anharmonicity.
    pub chi: f64,
    /// Resonator detuning from the signal field.
    pub delta_r: f64,
    /// Qubit detuning from the signal field.
    pub delta_e: f64,
}

impl SystemParams {
    /// The experimental device: Omega = 2pi x 20.9 MHz, chi = 2pi x 245 MHz,
    /// decay and dephasing rates taken as plain (non-angular) 1/us.
    pub fn device() -> Self {
        Self {
            omega: 2.0 * PI * 20.9,
            k: 10.0,
            kappa_q: 0.05,
            kappa_r: 0.08,
            gamma_q: 0.08,
            chi: 2.0 * PI * 245.0,
            delta_r: 0.0,
            delta_e: 0.0,
        }
    }

    /// Same couplings with every dissipative rate set to zero.
    pub fn without_dissipation(mut self) -> Self {
        self.kappa_q = 0.0;
        self.kappa_r = 0.0;
        self.gamma_q = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::OutOfDomain {
                name: "omega",
                value: self.omega,
                domain: "(0, inf)",
            });
        }
        for (name, v) in [
            ("k", self.k),
            ("kappa_q", self.kappa_q),
            ("kappa_r", self.kappa_r),
            ("gamma_q", self.gamma_q),
            ("chi", self.chi),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeRate {
                    channel: name.into(),
                    value: v,
                });
            }
        }
        if !self.delta_r.is_finite() || !self.delta_e.is_finite() {
            return Err(Error::Model("detunings must be finite".into()));
        }
        Ok(())
    }
}

/// The control trajectory `eps(t) = sqrt(1 - 1/(k^2 t^2 + 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSchedule {
    pub k: f64,
    pub epsilon_max: f64,
}

impl RampSchedule {
    pub fn new(k: f64, epsilon_max: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return Err(Error::OutOfDomain {
                name: "k",
                value: k,
                domain: "[0, inf)",
            });
        }
        if !(0.0..1.0).contains(&epsilon_max) {
            return Err(Error::UnreachableTarget(epsilon_max));
        }
        Ok(Self { k, epsilon_max })
    }

    pub fn epsilon(&self, t: f64) -> f64 {
        ramp_epsilon(t, self.k)
    }

    /// Time at which the ramp reaches `epsilon_max`.
    pub fn duration(&self) -> Result<f64> {
        ramp_time(self.epsilon_max, self.k)
    }
}

pub fn ramp_epsilon(t: f64, k: f64) -> f64 {
    let kt = k * t;
    // equal to sqrt(1 - 1/(k^2 t^2 + 1)) without the cancellation near eps = 0
    kt / (kt * kt + 1.0).sqrt()
}

pub fn ramp_time(epsilon: f64, k: f64) -> Result<f64> {
    if epsilon >= 1.0 {
        return Err(Error::UnreachableTarget(epsilon));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::OutOfDomain {
            name: "epsilon",
            value: epsilon,
            domain: "[0, 1)",
        });
    }
    if !(k > 0.0) {
        return Err(Error::OutOfDomain {
            name: "k",
            value: k,
            domain: "(0, inf)",
        });
    }
    Ok(epsilon / (k * (1.0 - epsilon * epsilon).sqrt()))
}

fn check_closed_unit(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::OutOfDomain {
            name: "epsilon",
            value: epsilon,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

fn check_below_critical(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::OutOfDomain {
            name: "epsilon",
            value: epsilon,
            domain: "[0, 1)",
        });
    }
    Ok(())
}

/// Excited-state population of the dark state, `(1 - sqrt(1 - eps^2)) / 2`.
pub fn dark_state_pe(epsilon: f64) -> Result<f64> {
    check_closed_unit(epsilon)?;
    Ok(pe_unchecked(epsilon))
}

fn pe_unchecked(epsilon: f64) -> f64 {
    // (1 - sqrt(A)) / 2 = eps^2 / (2 (1 + sqrt(A))), stable for small eps
    let s = (1.0 - epsilon * epsilon).max(0.0).sqrt();
    epsilon * epsilon / (2.0 * (1.0 + s))
}

/// `dP_e/d eps = eps / (2 sqrt(1 - eps^2))`.
pub fn dark_state_pe_derivative(epsilon: f64) -> Result<f64> {
    check_below_critical(epsilon)?;
    Ok(epsilon / (2.0 * (1.0 - epsilon * epsilon).sqrt()))
}

/// Projection-noise standard deviation `sqrt(P_e (1 - P_e))`; equals `eps / 2` on the dark state.
pub fn delta_pe(epsilon: f64) -> Result<f64> {
    let pe = dark_state_pe(epsilon)?;
    Ok((pe * (1.0 - pe)).sqrt())
}

/// Signal-to-noise ratio `(dP_e/d eps) / Delta P_e`.
pub fn snr(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Degenerate(format!(
            "snr is undefined at eps = {epsilon} (needs 0 < eps < 1)"
        )));
    }
    Ok(dark_state_pe_derivative(epsilon)? / delta_pe(epsilon)?)
}

/// Two-outcome Fisher information `(dP_e)^2 / (P_e (1 - P_e))` of the dark state.
pub fn fisher_classical(epsilon: f64) -> Result<f64> {
    check_below_critical(epsilon)?;
    if epsilon == 0.0 {
        // 0/0 limit of the two-outcome formula; dP_e ~ eps/2, P_e ~ eps^2/4
        return Ok(1.0);
    }
    let pe = pe_unchecked(epsilon);
    let dpe = dark_state_pe_derivative(epsilon)?;
    Ok(dpe * dpe / (pe * (1.0 - pe)))
}

/// Two-level qubit part of the dark state, `c+ |g> - c- |e>`.
pub fn dark_qubit_state(epsilon: f64) -> [f64; 2] {
    let s = (1.0 - epsilon * epsilon).max(0.0).sqrt();
    let c_plus = ((1.0 + s) / 2.0).sqrt();
    // c+ c- = eps / 2 keeps the sign of eps and avoids cancellation in 1 - s
    [c_plus, -epsilon / (2.0 * c_plus)]
}

/// Quantum Fisher information of the qubit dark state from central differences:
/// `4 [<d phi|d phi> - |<phi|d phi>|^2]`.
pub fn fisher_quantum_fd(epsilon: f64, h: f64) -> Result<f64> {
    check_below_critical(epsilon)?;
    if !(h > 0.0) || epsilon + h >= 1.0 {
        return Err(Error::OutOfDomain {
            name: "h",
            value: h,
            domain: "0 < h < 1 - eps",
        });
    }
    let p = dark_qubit_state(epsilon + h);
    let m = dark_qubit_state(epsilon - h);
    let phi = dark_qubit_state(epsilon);
    let d = [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)];
    let dd = d[0] * d[0] + d[1] * d[1];
    let overlap = phi[0] * d[0] + phi[1] * d[1];
    Ok(4.0 * (dd - overlap * overlap))
}

/// Fisher information along the ramp, `k^2 t^2 + 1`.
pub fn fisher_of_time(t: f64, k: f64) -> f64 {
    k * k * t * t + 1.0
}

/// `(E_{n,+}, E_{n,-})` in the units of `omega`.
pub fn quasi_energies(n: u32, epsilon: f64, omega: f64) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(Error::OutOfDomain {
            name: "n",
            value: n as f64,
            domain: "n >= 1",
        });
    }
    if epsilon >= 1.0 {
        return Err(Error::Model(format!(
            "no discrete quasi-energy spectrum at eps = {epsilon} >= 1"
        )));
    }
    check_below_critical(epsilon)?;
    let e = (n as f64).sqrt() * omega * (1.0 - epsilon * epsilon).powf(0.75);
    Ok((e, -e))
}

/// Gap between the dark state and its nearest bright states.
pub fn gap_min(epsilon: f64, omega: f64) -> Result<f64> {
    Ok(quasi_energies(1, epsilon, omega)?.0)
}

/// Squeezing parameter `r = ln(1 - eps^2) / 4`.
pub fn squeeze_parameter(epsilon: f64) -> f64 {
    0.25 * (1.0 - epsilon * epsilon).ln()
}

/// Residual tolerance, relative to `Omega`, for constructed eigenvectors.
pub const EIGENSTATE_RESIDUAL_TOL: f64 = 1e-6;

/// Dark state on `space` together with its relative Hamiltonian residual
/// `||H psi|| / Omega` (a truncation diagnostic). Never fails on truncation.
pub fn dark_state_with_residual(space: &HilbertSpace, epsilon: f64) -> Result<(CVector, f64)> {
    check_below_critical(epsilon)?;
    let fock = squeeze(space, squeeze_parameter(epsilon)).column(0).into_owned();
    let qubit = dark_qubit_state(epsilon);
    let mut psi = CVector::zeros(space.dim());
    for (level, c) in [(GROUND, qubit[0]), (EXCITED, qubit[1])] {
        for n in 0..space.fock_dim() {
            psi[space.index(level, n)] = fock[n] * c;
        }
    }
    psi /= Complex64::new(psi.norm(), 0.0);
    let residual = jc_residual(space, epsilon, &psi, 0.0);
    Ok((psi, residual))
}

fn unit_coupling() -> SystemParams {
    SystemParams {
        omega: 1.0,
        ..SystemParams::device().without_dissipation()
    }
}

fn jc_residual(space: &HilbertSpace, epsilon: f64, psi: &CVector, energy: f64) -> f64 {
    let two_level = HilbertSpace::new(2, space.fock_cutoff()).expect("valid cutoff");
    let ops = build_operators(two_level);
    let h = build_hamiltonian_jc2(epsilon, &unit_coupling(), &ops).expect("two-level space");
    let d = two_level.dim();
    let sub = psi.rows(0, d).into_owned();
    let leak = if psi.len() > d { psi.rows(d, psi.len() - d).norm() } else { 0.0 };
    (&h * &sub - &sub * Complex64::new(energy, 0.0)).norm() + leak
}

/// Dark state, failing when the truncation residual exceeds
/// [`EIGENSTATE_RESIDUAL_TOL`]. On a qutrit space the `|f>` amplitudes are zero.
pub fn dark_state_vector(space: &HilbertSpace, epsilon: f64) -> Result<QuantumState> {
    let (psi, residual) = dark_state_with_residual(space, epsilon)?;
    if residual > EIGENSTATE_RESIDUAL_TOL {
        return Err(Error::Accuracy {
            residual,
            tolerance: EIGENSTATE_RESIDUAL_TOL,
            detail: format!(
                "dark state at eps = {epsilon} with N_max = {}; raise the Fock cutoff",
                space.fock_cutoff()
            ),
        });
    }
    Ok(QuantumState::Ket(psi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Bright state `S(r) D(alpha) (|n-1>|phi1> +- |n>|phi0>) / sqrt(2)` with
/// `alpha = -+ sqrt(n) eps`.
pub fn bright_state_vector(
    space: &HilbertSpace,
    n: usize,
    branch: Branch,
    epsilon: f64,
) -> Result<QuantumState> {
    check_below_critical(epsilon)?;
    if n < 1 || n > space.fock_cutoff() {
        return Err(Error::OutOfDomain {
            name: "n",
            value: n as f64,
            domain: "1 <= n <= N_max",
        });
    }
    let s = branch.sign();
    let alpha = -s * (n as f64).sqrt() * epsilon;
    let fock_op = squeeze(space, squeeze_parameter(epsilon)) * displace(space, Complex64::new(alpha, 0.0));
    let [cp, cm] = {
        let q = dark_qubit_state(epsilon);
        [q[0], -q[1]]
    };
    // phi0 = c+ g - c- e, phi1 = c+ e - c- g
    let phi0 = [cp, -cm];
    let phi1 = [-cm, cp];
    let fd = space.fock_dim();
    let mut psi = CVector::zeros(space.dim());
    for (level, idx) in [(GROUND, 0), (EXCITED, 1)] {
        let mut fock_in = CVector::zeros(fd);
        fock_in[n - 1] += Complex64::new(phi1[idx] / 2f64.sqrt(), 0.0);
        fock_in[n] += Complex64::new(s * phi0[idx] / 2f64.sqrt(), 0.0);
        let out = &fock_op * fock_in;
        for m in 0..fd {
            psi[space.index(level, m)] = out[m];
        }
    }
    psi /= Complex64::new(psi.norm(), 0.0);
    let energy = s * (n as f64).sqrt() * (1.0 - epsilon * epsilon).powf(0.75);
    let residual = jc_residual(space, epsilon, &psi, energy);
    if residual > EIGENSTATE_RESIDUAL_TOL {
        return Err(Error::Accuracy {
            residual,
            tolerance: EIGENSTATE_RESIDUAL_TOL,
            detail: format!(
                "bright state n = {n} at eps = {epsilon} with N_max = {}",
                space.fock_cutoff()
            ),
        });
    }
    Ok(QuantumState::Ket(psi))
}

/// `<N>_0 = sinh^2 r`.
pub fn mean_photon_dark(epsilon: f64) -> Result<f64> {
    check_below_critical(epsilon)?;
    Ok(squeeze_parameter(epsilon).sinh().powi(2))
}

/// `<N>_n = 2 n eps^2 e^{-2r} + n cosh 2r - 1/2`.
pub fn mean_photon_bright(n: u32, epsilon: f64) -> Result<f64> {
    check_below_critical(epsilon)?;
    let r = squeeze_parameter(epsilon);
    let n = n as f64;
    Ok(2.0 * n * epsilon * epsilon * (-2.0 * r).exp() + n * (2.0 * r).cosh() - 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeFit {
    /// Contrast scale in `P_e = C (1 - sqrt(1 - eps^2)) / 2`.
    pub c: f64,
    pub residuals: Vec<f64>,
    pub rms: f64,
}

/// Ordinary least squares for `C` in `P_e(eps) = C (1 - sqrt(1 - eps^2)) / 2`.
pub fn fit_pe_curve(points: &[(f64, f64)]) -> Result<PeFit> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to fit".into()));
    }
    let mut sgy = 0.0;
    let mut sgg = 0.0;
    for &(eps, pe) in points {
        check_closed_unit(eps)?;
        let g = pe_unchecked(eps);
        sgy += g * pe;
        sgg += g * g;
    }
    if sgg == 0.0 {
        return Err(Error::Degenerate("all points at eps = 0".into()));
    }
    let c = sgy / sgg;
    let residuals: Vec<f64> = points
        .iter()
        .map(|&(eps, pe)| pe - c * pe_unchecked(eps))
        .collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(PeFit { c, residuals, rms })
}

/// Ion-trap dark-state population as a function of the Raman strength `chi0`:
/// the drive ratio is `2 lambda / (eta0 chi0)`.
pub fn iontrap_pe(lambda: f64, eta0: f64, chi0: f64) -> Result<f64> {
    let denom = eta0 * chi0;
    if !(denom > 0.0) {
        return Err(Error::OutOfDomain {
            name: "eta0 * chi0",
            value: denom,
            domain: "(0, inf)",
        });
    }
    let x = 2.0 * lambda / denom;
    if x > 1.0 {
        return Err(Error::Model(format!(
            "drive ratio 2 lambda / (eta0 chi0) = {x} is beyond the critical point"
        )));
    }
    dark_state_pe(x)
}

/// Convenience: the dark state as a density matrix.
pub fn dark_state_density(space: &HilbertSpace, epsilon: f64) -> Result<crate::quantum::CMatrix> {
    Ok(dark_state_vector(space, epsilon)?.to_density())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{expectation, hermitian_eigenvalues};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ramp_round_trip_and_timing() {
        assert_eq!(ramp_epsilon(0.0, 10.0), 0.0);
        let t = ramp_time(0.99, 10.0).unwrap();
        assert!(close(t, 0.70179, 1e-5), "t = {t}");
        let e = ramp_epsilon(ramp_time(0.5, 10.0).unwrap(), 10.0);
        assert!(close(e, 0.5, 1e-12));
        assert!(matches!(ramp_time(1.0, 10.0), Err(Error::UnreachableTarget(_))));
    }

    #[test]
    fn ramp_schedule_monotone_below_one() {
        let s = RampSchedule::new(10.0, 0.99).unwrap();
        let mut prev = -1.0;
        for i in 0..200 {
            let e = s.epsilon(i as f64 * 0.05);
            assert!(e > prev && e < 1.0);
            prev = e;
        }
        assert!(RampSchedule::new(10.0, 1.0).is_err());
    }

    #[test]
    fn dark_pe_values() {
        assert_eq!(dark_state_pe(0.0).unwrap(), 0.0);
        assert!(close(dark_state_pe(0.99).unwrap(), 0.42946, 1e-5));
        assert!(close(dark_state_pe(0.9).unwrap(), 0.28206, 1e-5));
        assert!(close(dark_state_pe(1.0).unwrap(), 0.5, 1e-15));
        assert!(dark_state_pe(1.01).is_err());
        assert!(dark_state_pe(-0.1).is_err());
    }

    #[test]
    fn delta_pe_and_snr() {
        assert!(close(delta_pe(0.5).unwrap(), 0.25, 1e-15));
        assert!(close(snr(0.99).unwrap(), 7.0888, 1e-4));
        let asym = 1.0 / (2.0 * 0.01f64).sqrt();
        assert!((snr(0.99).unwrap() - asym).abs() / asym < 0.02);
        assert!(snr(0.0).is_err());
        assert!(snr(1.0).is_err());
    }

    #[test]
    fn fisher_values() {
        assert_eq!(fisher_classical(0.0).unwrap(), 1.0);
        assert!(close(fisher_classical(0.99).unwrap(), 50.2513, 1e-4));
        let fd = fisher_quantum_fd(0.9, 1e-5).unwrap();
        assert!((fd - fisher_classical(0.9).unwrap()).abs() < 1e-5);
        assert!(fisher_classical(1.0).is_err());
    }

    #[test]
    fn fisher_time_law() {
        assert_eq!(fisher_of_time(0.0, 10.0), 1.0);
        assert!(close(fisher_of_time(0.70179, 10.0), 50.251, 1e-3));
        let t = 0.37;
        assert!(close(fisher_of_time(2.0 * t, 3.0) - 1.0, 4.0 * (fisher_of_time(t, 3.0) - 1.0), 1e-12));
    }

    #[test]
    fn quasi_energy_cases() {
        let om = 2.0 * PI * 20.9;
        let (p, m) = quasi_energies(1, 0.0, om).unwrap();
        assert!(close(p, om, 1e-12) && close(m, -om, 1e-12));
        let g = gap_min(0.9, om).unwrap();
        assert!(close(g, 2.0 * PI * 20.9 * 0.19f64.powf(0.75), 1e-12));
        assert!(close(g / (2.0 * PI), 6.015, 1e-3));
        let r = quasi_energies(4, 0.6, om).unwrap().0 / quasi_energies(1, 0.6, om).unwrap().0;
        assert!(close(r, 2.0, 1e-12));
        assert!(quasi_energies(1, 1.0, om).is_err());
    }

    #[test]
    fn dark_vector_at_zero_drive() {
        let sp = HilbertSpace::new(2, 10).unwrap();
        let QuantumState::Ket(psi) = dark_state_vector(&sp, 0.0).unwrap() else {
            panic!()
        };
        assert!(close(psi[sp.index(GROUND, 0)].re, 1.0, 1e-15));
        assert!(close(psi.norm(), 1.0, 1e-15));
    }

    #[test]
    fn dark_vector_residual_and_population() {
        let sp = HilbertSpace::new(2, 60).unwrap();
        let (_, res) = dark_state_with_residual(&sp, 0.8).unwrap();
        assert!(res < 1e-6, "res {res}");
        let (psi, _) = dark_state_with_residual(&sp, 0.99).unwrap();
        let ops = build_operators(sp);
        let pe = expectation(&ops.projectors[EXCITED], &QuantumState::Ket(psi)).unwrap().re;
        assert!(close(pe, dark_state_pe(0.99).unwrap(), 1e-5));
        // too small a cutoff is reported, not silently accepted
        let small = HilbertSpace::new(2, 4).unwrap();
        assert!(matches!(dark_state_vector(&small, 0.95), Err(Error::Accuracy { .. })));
    }

    #[test]
    fn bright_vectors_are_eigenstates() {
        let sp = HilbertSpace::new(2, 60).unwrap();
        let ops = build_operators(sp);
        for &eps in &[0.0, 0.5, 0.8] {
            for n in 1..=2 {
                for br in [Branch::Plus, Branch::Minus] {
                    let st = bright_state_vector(&sp, n, br, eps).unwrap();
                    let nbar = expectation(&ops.number, &st).unwrap().re;
                    assert!(close(nbar, mean_photon_bright(n as u32, eps).unwrap(), 1e-6));
                }
            }
        }
    }

    #[test]
    fn mean_photon_values() {
        assert_eq!(mean_photon_dark(0.0).unwrap(), 0.0);
        // sinh^2(ln(0.0199)/4)
        assert!(close(mean_photon_dark(0.99).unwrap(), 1.30747, 1e-5));
        assert!(close(mean_photon_bright(1, 0.0).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn dark_photon_number_matches_construction() {
        let sp = HilbertSpace::new(2, 60).unwrap();
        let ops = build_operators(sp);
        for &eps in &[0.2, 0.5, 0.8, 0.9] {
            let st = dark_state_vector(&sp, eps).unwrap();
            let n = expectation(&ops.number, &st).unwrap().re;
            assert!(close(n, mean_photon_dark(eps).unwrap(), 1e-6), "eps {eps}");
        }
    }

    #[test]
    fn spectrum_has_zero_mode() {
        let sp = HilbertSpace::new(2, 60).unwrap();
        let ops = build_operators(sp);
        let h = build_hamiltonian_jc2(0.8, &unit_coupling(), &ops).unwrap();
        let ev = hermitian_eigenvalues(&h);
        let min_abs = ev.iter().fold(f64::INFINITY, |a, e| a.min(e.abs()));
        assert!(min_abs < 1e-6);
    }

    #[test]
    fn pe_fit_cases() {
        let pts: Vec<(f64, f64)> = [0.9, 0.93, 0.96, 0.985]
            .iter()
            .map(|&e| (e, dark_state_pe(e).unwrap()))
            .collect();
        let fit = fit_pe_curve(&pts).unwrap();
        assert!(close(fit.c, 1.0, 1e-10));
        assert!(fit.rms < 1e-12);
        let one = [(0.99, 0.5 * dark_state_pe(0.99).unwrap())];
        assert!(close(fit_pe_curve(&one).unwrap().c, 0.5, 1e-12));
        assert!(fit_pe_curve(&[]).is_err());
        assert!(matches!(fit_pe_curve(&[(0.0, 0.1), (0.0, 0.2)]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn iontrap_mapping() {
        assert_eq!(iontrap_pe(0.0, 0.1, 5.0).unwrap(), 0.0);
        // 2 lambda / (eta0 chi0) = 0.99
        let pe = iontrap_pe(0.99 * 0.1 * 5.0 / 2.0, 0.1, 5.0).unwrap();
        assert!(close(pe, 0.42946, 1e-5));
        let a = iontrap_pe(0.3, 0.1, 8.0).unwrap();
        let b = iontrap_pe(0.6, 0.1, 16.0).unwrap();
        assert!(close(a, b, 1e-15));
        assert!(iontrap_pe(1.0, 0.1, 5.0).is_err());
    }

    #[test]
    fn device_params_validate() {
        SystemParams::device().validate().unwrap();
        let mut p = SystemParams::device();
        p.kappa_r = -1.0;
        assert!(p.validate().is_err());
        p = SystemParams::device();
        p.omega = 0.0;
        assert!(p.validate().is_err());
    }
}
