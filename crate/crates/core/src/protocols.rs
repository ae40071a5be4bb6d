//! Scenario drivers: quench runs, working-point and ramp-speed scans,
//! detuning optimization, robustness scans, Fisher error budgets and the
//! Rabi-method comparison.

use rayon::prelude::*;

use crate::analytics::{
    dark_state_pe, dark_state_pe_derivative, fisher_classical, fit_pe_curve, ramp_time, RampSchedule,
    SystemParams,
};
use crate::error::{Error, Result};
use crate::lindblad::{
    default_cutoff, ground_vacuum, integrate, HamiltonianModel, IntegratorOptions, ModelKind, Trajectory,
    TrajectoryRecord,
};
use crate::quantum::HilbertSpace;

/// Cells with `D` at or below this are flagged as optimal working points.
pub const OPTIMAL_DEVIATION: f64 = 1e-3;

/// Bin width used when smoothing Rabi ripple out of `P_e(eps)`.
pub const SMOOTHING_BIN: f64 = 0.005;

#[derive(Debug, Clone)]
pub struct QuenchSpec {
    pub kind: ModelKind,
    pub params: SystemParams,
    pub epsilon_target: f64,
    pub fock_cutoff: usize,
    /// Spacing of the uniform `eps` sampling grid; `0` records only `extra_epsilons` and the end point.
    pub epsilon_step: f64,
    pub extra_epsilons: Vec<f64>,
    pub options: IntegratorOptions,
}

impl QuenchSpec {
    pub fn new(kind: ModelKind, params: SystemParams, epsilon_target: f64) -> Self {
        Self {
            kind,
            params,
            epsilon_target,
            fock_cutoff: default_cutoff(epsilon_target),
            epsilon_step: 1e-3,
            extra_epsilons: Vec::new(),
            options: IntegratorOptions::default(),
        }
    }

    pub fn cutoff(mut self, n: usize) -> Self {
        self.fock_cutoff = n;
        self
    }

    pub fn step(mut self, epsilon_step: f64) -> Self {
        self.epsilon_step = epsilon_step;
        self
    }

    pub fn sample_at(mut self, epsilons: &[f64]) -> Self {
        self.extra_epsilons.extend_from_slice(epsilons);
        self
    }

    pub fn options(mut self, options: IntegratorOptions) -> Self {
        self.options = options;
        self
    }

    pub fn model(&self) -> Result<HamiltonianModel> {
        if !(self.params.k > 0.0) {
            return Err(Error::OutOfDomain {
                name: "k",
                value: self.params.k,
                domain: "(0, inf)",
            });
        }
        let schedule = RampSchedule::new(self.params.k, self.epsilon_target)?;
        let space = HilbertSpace::new(self.kind.qubit_levels(), self.fock_cutoff)?;
        HamiltonianModel::new(self.kind, self.params, schedule, space)
    }

    /// Sample times: the uniform `eps` grid plus the extra points, as ramp times.
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let k = self.params.k;
        let mut eps: Vec<f64> = Vec::new();
        if self.epsilon_step > 0.0 {
            let n = (self.epsilon_target / self.epsilon_step).floor() as usize;
            eps.extend((1..=n).map(|i| i as f64 * self.epsilon_step));
        }
        eps.extend(self.extra_epsilons.iter().copied());
        eps.into_iter()
            .filter(|&e| e > 0.0 && e < self.epsilon_target)
            .map(|e| ramp_time(e, k))
            .collect()
    }
}

/// Integrates the quench from `|g,0>` until the ramp reaches the target.
pub fn run_quench(spec: &QuenchSpec) -> Result<Trajectory> {
    let model = spec.model()?;
    let t_end = model.schedule.duration()?;
    integrate(&model, &ground_vacuum(&model.space), t_end, &spec.sample_times()?, &spec.options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Values of one or more quantities on the product of the axes. Cells are
/// stored row-major with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub title: String,
    pub axes: Vec<Axis>,
    pub quantities: Vec<String>,
    /// `values[q][cell]`.
    pub values: Vec<Vec<f64>>,
    pub flags: Option<(String, Vec<bool>)>,
    pub metadata: Vec<(String, String)>,
}

impl ScanResult {
    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cell_count();
        if self.values.len() != self.quantities.len() {
            return Err(Error::DimensionMismatch {
                expected: self.quantities.len(),
                found: self.values.len(),
            });
        }
        for v in &self.values {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        if let Some((_, f)) = &self.flags {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: f.len(),
                });
            }
        }
        Ok(())
    }

    /// Grid coordinates of a flat cell index.
    pub fn coordinates(&self, mut cell: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            let len = axis.values.len();
            out[i] = axis.values[cell % len];
            cell /= len;
        }
        out
    }

    pub fn cell(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.values.len() + i)
    }

    pub fn quantity(&self, name: &str) -> Option<&[f64]> {
        self.quantities
            .iter()
            .position(|q| q == name)
            .map(|i| self.values[i].as_slice())
    }

    /// Cell with the smallest value of `name` (first on ties).
    pub fn argmin(&self, name: &str) -> Option<usize> {
        let v = self.quantity(name)?;
        (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b]))
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn params_metadata(kind: ModelKind, p: &SystemParams) -> Vec<(String, String)> {
    vec![
        ("model".into(), kind.name().into()),
        ("omega_rad_per_us".into(), format!("{:.15e}", p.omega)),
        ("k_per_us".into(), format!("{:.15e}", p.k)),
        ("kappa_q_per_us".into(), format!("{:.15e}", p.kappa_q)),
        ("kappa_r_per_us".into(), format!("{:.15e}", p.kappa_r)),
        ("gamma_q_per_us".into(), format!("{:.15e}", p.gamma_q)),
        ("chi_rad_per_us".into(), format!("{:.15e}", p.chi)),
        ("delta_r_rad_per_us".into(), format!("{:.15e}", p.delta_r)),
        ("delta_e_rad_per_us".into(), format!("{:.15e}", p.delta_e)),
    ]
}

/// `D = |P_e - P_e^I| / P_e^I`.
pub fn relative_deviation(pe: f64, ideal: f64) -> f64 {
    (pe - ideal).abs() / ideal
}

fn check_epsilon_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InsufficientData("empty epsilon grid".into()));
    }
    for &e in grid {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::OutOfDomain {
                name: "epsilon",
                value: e,
                domain: "(0, 1)",
            });
        }
    }
    Ok(())
}

/// Decay-rate triple for [`relative_error_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub kappa_q: f64,
    pub kappa_r: f64,
    pub gamma_q: f64,
}

impl RateSet {
    pub fn of(p: &SystemParams) -> Self {
        Self {
            kappa_q: p.kappa_q,
            kappa_r: p.kappa_r,
            gamma_q: p.gamma_q,
        }
    }

    fn apply(&self, mut p: SystemParams) -> SystemParams {
        p.kappa_q = self.kappa_q;
        p.kappa_r = self.kappa_r;
        p.gamma_q = self.gamma_q;
        p
    }
}

/// `D(eps_w, k)` for each rate set. One jc2 quench per `(rates, k)` reaches
/// the largest working point and is sampled exactly at every `eps_w`.
pub fn relative_error_scan(
    epsilon_w: &[f64],
    k_grid: &[f64],
    rate_sets: &[RateSet],
    params: &SystemParams,
    fock_cutoff: usize,
) -> Result<Vec<ScanResult>> {
    check_epsilon_grid(epsilon_w)?;
    if k_grid.is_empty() || rate_sets.is_empty() {
        return Err(Error::InsufficientData("empty k grid or rate set list".into()));
    }
    let eps_max = epsilon_w.iter().copied().fold(0.0, f64::max);
    let jobs: Vec<(usize, usize)> = (0..rate_sets.len())
        .flat_map(|r| (0..k_grid.len()).map(move |k| (r, k)))
        .collect();
    let runs: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(r, ki)| {
            let mut p = rate_sets[r].apply(*params);
            p.k = k_grid[ki];
            let spec = QuenchSpec::new(ModelKind::Jc2, p, eps_max)
                .cutoff(fock_cutoff)
                .step(0.0)
                .sample_at(epsilon_w)
                .options(IntegratorOptions {
                    record_fidelity: false,
                    ..IntegratorOptions::default()
                });
            let tr = run_quench(&spec)?;
            Ok(epsilon_w.iter().map(|&e| tr.nearest_epsilon(e).p_e).collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(rate_sets.len());
    for (r, rates) in rate_sets.iter().enumerate() {
        let mut pe = Vec::new();
        let mut d = Vec::new();
        for (ei, &e) in epsilon_w.iter().enumerate() {
            let ideal = dark_state_pe(e)?;
            for ki in 0..k_grid.len() {
                let v = runs[r * k_grid.len() + ki][ei];
                pe.push(v);
                d.push(relative_deviation(v, ideal));
            }
        }
        let flags = d.iter().map(|&x| x <= OPTIMAL_DEVIATION).collect();
        let mut metadata = params_metadata(ModelKind::Jc2, &rates.apply(*params));
        metadata.push(("fock_cutoff".into(), fock_cutoff.to_string()));
        out.push(ScanResult {
            title: "relative deviation of P_e from the dark state".into(),
            axes: vec![
                Axis::new("epsilon_w", epsilon_w.to_vec()),
                Axis::new("k_per_us", k_grid.to_vec()),
            ],
            quantities: vec!["P_e".into(), "D".into()],
            values: vec![pe, d],
            flags: Some(("D_le_0.1pct".into(), flags)),
            metadata,
        });
    }
    Ok(out)
}

/// Maximum of `P_f` over a detuned qutrit quench on the `(delta_r, delta_e)` grid.
pub fn detuning_scan(
    delta_r: &[f64],
    delta_e: &[f64],
    params: &SystemParams,
    epsilon_target: f64,
    fock_cutoff: usize,
) -> Result<ScanResult> {
    if delta_r.is_empty() || delta_e.is_empty() {
        return Err(Error::InsufficientData("empty detuning grid".into()));
    }
    let cells: Vec<(f64, f64)> = delta_r
        .iter()
        .flat_map(|&r| delta_e.iter().map(move |&e| (r, e)))
        .collect();
    let results: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(dr, de)| {
            let mut p = *params;
            p.delta_r = dr;
            p.delta_e = de;
            let spec = QuenchSpec::new(ModelKind::QutritDetuned, p, epsilon_target).cutoff(fock_cutoff);
            let tr = run_quench(&spec)?;
            let max_pf = tr.records.iter().map(|r| r.p_f).fold(0.0, f64::max);
            Ok((max_pf, tr.last().fidelity))
        })
        .collect::<Result<_>>()?;
    let mut metadata = params_metadata(ModelKind::QutritDetuned, params);
    metadata.push(("epsilon_target".into(), format!("{epsilon_target:.15e}")));
    metadata.push(("fock_cutoff".into(), fock_cutoff.to_string()));
    let mut scan = ScanResult {
        title: "maximum P_f over the quench versus detunings".into(),
        axes: vec![
            Axis::new("delta_r_rad_per_us", delta_r.to_vec()),
            Axis::new("delta_e_rad_per_us", delta_e.to_vec()),
        ],
        quantities: vec!["max_P_f".into(), "final_fidelity".into()],
        values: vec![
            results.iter().map(|r| r.0).collect(),
            results.iter().map(|r| r.1).collect(),
        ],
        flags: None,
        metadata,
    };
    if let Some(best) = scan.argmin("max_P_f") {
        let c = scan.coordinates(best);
        scan.metadata.push(("argmin_delta_r".into(), format!("{:.15e}", c[0])));
        scan.metadata.push(("argmin_delta_e".into(), format!("{:.15e}", c[1])));
    }
    Ok(scan)
}

/// `(max - min) / mean`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean.abs()
}

/// `P_e` and `<a_dag a>` at the working point with the signal detuned by
/// `delta` from both the resonator and the qubit.
pub fn frequency_robustness_scan(
    detunings: &[f64],
    params: &SystemParams,
    epsilon_w: f64,
    fock_cutoff: usize,
) -> Result<ScanResult> {
    if detunings.is_empty() {
        return Err(Error::InsufficientData("empty detuning grid".into()));
    }
    let rows: Vec<TrajectoryRecord> = detunings
        .par_iter()
        .map(|&d| {
            let mut p = *params;
            p.delta_r = d;
            p.delta_e = d;
            let spec = QuenchSpec::new(ModelKind::Jc2, p, epsilon_w)
                .cutoff(fock_cutoff)
                .step(0.0);
            Ok(*run_quench(&spec)?.last())
        })
        .collect::<Result<_>>()?;
    let pe: Vec<f64> = rows.iter().map(|r| r.p_e).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.n_avg).collect();
    let mut metadata = params_metadata(ModelKind::Jc2, params);
    metadata.push(("epsilon_w".into(), format!("{epsilon_w:.15e}")));
    metadata.push(("P_e_relative_spread".into(), format!("{:.15e}", relative_spread(&pe))));
    metadata.push(("n_avg_relative_spread".into(), format!("{:.15e}", relative_spread(&n))));
    Ok(ScanResult {
        title: "working-point observables versus signal detuning".into(),
        axes: vec![Axis::new("delta_rad_per_us", detunings.to_vec())],
        quantities: vec!["P_e".into(), "n_avg".into(), "fidelity".into()],
        values: vec![pe, n, rows.iter().map(|r| r.fidelity).collect()],
        flags: None,
        metadata,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    /// Second-order finite differences across neighbouring grid points.
    FiniteDifference,
    /// Derivative of the fitted curve `C (1 - sqrt(1 - eps^2)) / 2`.
    Fit,
}

/// `df/dx` on a strictly increasing, possibly non-uniform grid, second order
/// everywhere including the end points.
pub fn gradient(x: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 || f.len() != n {
        return Err(Error::InsufficientData(format!(
            "finite differences need at least 3 points, got {n}"
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InsufficientData("grid must be strictly increasing".into()));
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        d[i] = (h1 * h1 * f[i + 1] - h2 * h2 * f[i - 1] + (h2 * h2 - h1 * h1) * f[i])
            / (h1 * h2 * (h1 + h2));
    }
    let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1]
        - h1 / (h2 * (h1 + h2)) * f[2];
    let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
    d[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2]
        + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[n - 1];
    Ok(d)
}

/// Two-outcome Fisher information `(dP)^2 / (P (1 - P))`.
pub fn two_outcome_fisher(p: f64, dp: f64) -> f64 {
    dp * dp / (p * (1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetEntry {
    pub epsilon: f64,
    pub fisher_ideal: f64,
    pub fisher_hamiltonian: f64,
    pub fisher_master: f64,
    pub pe_hamiltonian: f64,
    pub pe_master: f64,
    /// `|F_H - F_ideal| / F_ideal`.
    pub nonadiabatic: f64,
    /// `|F_ME - F_H| / F_ideal`.
    pub decoherence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBudget {
    pub entries: Vec<BudgetEntry>,
    pub method: DerivativeMethod,
}

fn simulated_fisher(eps: &[f64], pe: &[f64], method: DerivativeMethod) -> Result<Vec<f64>> {
    match method {
        DerivativeMethod::FiniteDifference => {
            let d = gradient(eps, pe)?;
            Ok(pe.iter().zip(&d).map(|(&p, &dp)| two_outcome_fisher(p, dp)).collect())
        }
        DerivativeMethod::Fit => {
            if eps.len() < 3 {
                return Err(Error::InsufficientData("fit-based budget needs at least 3 points".into()));
            }
            let pts: Vec<(f64, f64)> = eps.iter().copied().zip(pe.iter().copied()).collect();
            let c = fit_pe_curve(&pts)?.c;
            eps.iter()
                .map(|&e| Ok(two_outcome_fisher(c * dark_state_pe(e)?, c * dark_state_pe_derivative(e)?)))
                .collect()
        }
    }
}

/// Fisher information from the ideal dark state, from Hamiltonian-only
/// dynamics and from the master equation, on a common `eps` grid.
pub fn error_budget(
    epsilon_grid: &[f64],
    params: &SystemParams,
    fock_cutoff: usize,
    method: DerivativeMethod,
) -> Result<ErrorBudget> {
    check_epsilon_grid(epsilon_grid)?;
    if epsilon_grid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "error budget needs at least 3 grid points, got {}",
            epsilon_grid.len()
        )));
    }
    if epsilon_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InsufficientData("epsilon grid must be strictly increasing".into()));
    }
    let eps_max = *epsilon_grid.last().expect("non-empty");
    let cases = [params.without_dissipation(), *params];
    let pe: Vec<Vec<f64>> = cases
        .par_iter()
        .map(|p| {
            let spec = QuenchSpec::new(ModelKind::Jc2, *p, eps_max)
                .cutoff(fock_cutoff)
                .step(0.0)
                .sample_at(epsilon_grid)
                .options(IntegratorOptions {
                    record_fidelity: false,
                    ..IntegratorOptions::default()
                });
            let tr = run_quench(&spec)?;
            Ok(epsilon_grid.iter().map(|&e| tr.nearest_epsilon(e).p_e).collect())
        })
        .collect::<Result<_>>()?;
    let f_h = simulated_fisher(epsilon_grid, &pe[0], method)?;
    let f_me = simulated_fisher(epsilon_grid, &pe[1], method)?;
    let entries = epsilon_grid
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let ideal = fisher_classical(e)?;
            Ok(BudgetEntry {
                epsilon: e,
                fisher_ideal: ideal,
                fisher_hamiltonian: f_h[i],
                fisher_master: f_me[i],
                pe_hamiltonian: pe[0][i],
                pe_master: pe[1][i],
                nonadiabatic: (f_h[i] - ideal).abs() / ideal,
                decoherence: (f_me[i] - f_h[i]).abs() / ideal,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ErrorBudget { entries, method })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiComparison {
    /// Bias-point time `t_n = n pi / (2 eps0)`.
    pub t_n: f64,
    /// `-cos[(eps0 + d_eps) t_n] / 2`.
    pub delta_pe_exact: f64,
    /// `(-1)^((n-1)/2) d_eps t_n / 2`.
    pub delta_pe_linear: f64,
    /// `-cos[eps0 (t_n + d_t)] / 2`.
    pub timing_pe_exact: f64,
    /// `(-1)^((n-1)/2) eps0 d_t / 2`.
    pub timing_pe_linear: f64,
}

/// Conventional Rabi interferometry around the bias point `eps0 t_n = n pi / 2`.
pub fn rabi_method_sim(eps0: f64, n: u32, delta_eps: f64, delta_t: f64) -> Result<RabiComparison> {
    if n.is_multiple_of(2) {
        return Err(Error::OutOfDomain {
            name: "n",
            value: n as f64,
            domain: "odd integers",
        });
    }
    if !(eps0 > 0.0) {
        return Err(Error::OutOfDomain {
            name: "eps0",
            value: eps0,
            domain: "(0, inf)",
        });
    }
    let t_n = n as f64 * std::f64::consts::PI / (2.0 * eps0);
    let sign = if ((n - 1) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    // cos(n pi / 2) is zero only up to rounding; keep the exact bias point at zero
    let cos_shift = |phase: f64| -> f64 {
        let bias = n as f64 * std::f64::consts::FRAC_PI_2;
        // cos(bias + x) = -sign * sin(x) for odd n
        -sign * (phase - bias).sin()
    };
    Ok(RabiComparison {
        t_n,
        delta_pe_exact: -0.5 * cos_shift((eps0 + delta_eps) * t_n),
        delta_pe_linear: 0.5 * sign * delta_eps * t_n,
        timing_pe_exact: -0.5 * cos_shift(eps0 * (t_n + delta_t)),
        timing_pe_linear: 0.5 * sign * eps0 * delta_t,
    })
}

/// `P_e` at `eps_target` when the ramp coefficient is rescaled so that the
/// target is reached at each time `T`. Ratios are given both against the
/// simulated reference run (`k` of `params`) and against the dark state.
pub fn ramping_time_robustness(
    epsilon_target: f64,
    t_grid: &[f64],
    params: &SystemParams,
    fock_cutoff: usize,
) -> Result<ScanResult> {
    let options = IntegratorOptions {
        record_fidelity: false,
        ..IntegratorOptions::default()
    };
    Ok(ramping_time_runs(epsilon_target, t_grid, params, fock_cutoff, &options)?.0)
}

/// [`ramping_time_robustness`] with explicit integrator options, also
/// returning the trajectories (one per `T`, then the reference run).
pub fn ramping_time_runs(
    epsilon_target: f64,
    t_grid: &[f64],
    params: &SystemParams,
    fock_cutoff: usize,
    options: &IntegratorOptions,
) -> Result<(ScanResult, Vec<Trajectory>)> {
    check_epsilon_grid(&[epsilon_target])?;
    if t_grid.is_empty() {
        return Err(Error::InsufficientData("empty ramping-time grid".into()));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::OutOfDomain {
            name: "T",
            value: t,
            domain: "(0, inf)",
        });
    }
    let t_ref = ramp_time(epsilon_target, params.k)?;
    // k T = eps / sqrt(1 - eps^2)
    let kt = epsilon_target / (1.0 - epsilon_target * epsilon_target).sqrt();
    let mut ks: Vec<f64> = t_grid.iter().map(|&t| kt / t).collect();
    ks.push(params.k);
    let runs: Vec<Trajectory> = ks
        .par_iter()
        .map(|&k| {
            let mut p = *params;
            p.k = k;
            let spec = QuenchSpec::new(ModelKind::Jc2, p, epsilon_target)
                .cutoff(fock_cutoff)
                .step(0.0)
                .options(*options);
            run_quench(&spec)
        })
        .collect::<Result<_>>()?;
    let pe: Vec<f64> = runs.iter().map(|r| r.last().p_e).collect();
    let reference = *pe.last().expect("reference run");
    let ideal = dark_state_pe(epsilon_target)?;
    let n = t_grid.len();
    let ratio: Vec<f64> = pe[..n].iter().map(|&p| p / reference).collect();
    let flags = ratio.iter().map(|&r| (0.98..=1.0).contains(&r)).collect();
    let mut metadata = params_metadata(ModelKind::Jc2, params);
    metadata.push(("epsilon_target".into(), format!("{epsilon_target:.15e}")));
    metadata.push(("T_ref_us".into(), format!("{t_ref:.15e}")));
    metadata.push(("P_e_ref".into(), format!("{reference:.15e}")));
    metadata.push(("P_e_dark".into(), format!("{ideal:.15e}")));
    let scan = ScanResult {
        title: "P_e versus ramping time".into(),
        axes: vec![Axis::new("T_us", t_grid.to_vec())],
        quantities: vec![
            "T_over_T_ref".into(),
            "k_per_us".into(),
            "P_e".into(),
            "P_e_over_ref".into(),
            "P_e_over_dark".into(),
        ],
        values: vec![
            t_grid.iter().map(|&t| t / t_ref).collect(),
            ks[..n].to_vec(),
            pe[..n].to_vec(),
            ratio,
            pe[..n].iter().map(|&p| p / ideal).collect(),
        ],
        flags: Some(("within_0.98_1.0_of_ref".into(), flags)),
        metadata,
    };
    Ok((scan, runs))
}

/// Mean `P_e` in `eps` bins of width `bin`, as `(bin centre, mean)`; empty bins are skipped.
pub fn epsilon_binned_pe(records: &[TrajectoryRecord], bin: f64) -> Vec<(f64, f64)> {
    let mut sums: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
    for r in records {
        let b = (r.epsilon / bin).floor() as i64;
        let e = sums.entry(b).or_insert((0.0, 0));
        e.0 += r.p_e;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(b, (s, c))| ((b as f64 + 0.5) * bin, s / c as f64))
        .collect()
}

/// Largest decrease between consecutive values (0 for a non-decreasing series).
pub fn max_decrease(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max)
}
