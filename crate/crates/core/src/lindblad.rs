//! Lindblad master-equation integration for the driven JC model and its
//! qutrit extension.
//!
//! `d rho/dt = -i[H, rho] + sum_j rate_j (L_j rho L_j^+ - {L_j^+ L_j, rho}/2)`
//!
//! The Hamiltonian is affine in the drive, `H(t) = H_static + eps(t) H_drive`,
//! and is re-evaluated at every Runge-Kutta stage time. Operators are stored
//! dense at the API boundary; the propagator compresses them to CSR since
//! every operator of the model is banded in the Fock index.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytics::{dark_state_with_residual, ramp_epsilon, RampSchedule, SystemParams};
use crate::error::{Error, Result};
use crate::quantum::{
    build_operators, hermitian_eigenvalues, hermiticity_defect, CMatrix, HilbertSpace,
    OperatorSet, QuantumState, C0, CI, EXCITED, GROUND, SECOND,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Two-level qubit, `H = Omega[(a_dag q + a q_dag) + eps (a + a_dag)/2]` plus optional detunings.
    Jc2,
    /// Qutrit with the signal resonant with qubit and resonator.
    QutritResonant,
    /// Qutrit in the frame of the signal with detunings `delta_r`, `delta_e`.
    QutritDetuned,
}

impl ModelKind {
    pub fn qubit_levels(self) -> usize {
        match self {
            ModelKind::Jc2 => 2,
            ModelKind::QutritResonant | ModelKind::QutritDetuned => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Jc2 => "jc2",
            ModelKind::QutritResonant => "qutrit_resonant",
            ModelKind::QutritDetuned => "qutrit_detuned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianModel {
    pub kind: ModelKind,
    pub params: SystemParams,
    pub schedule: RampSchedule,
    pub space: HilbertSpace,
}

impl HamiltonianModel {
    pub fn new(
        kind: ModelKind,
        params: SystemParams,
        schedule: RampSchedule,
        space: HilbertSpace,
    ) -> Result<Self> {
        if space.qubit_levels() != kind.qubit_levels() {
            return Err(Error::Model(format!(
                "{} needs {} qubit levels, space has {}",
                kind.name(),
                kind.qubit_levels(),
                space.qubit_levels()
            )));
        }
        params.validate()?;
        Ok(Self {
            kind,
            params,
            schedule,
            space,
        })
    }

    pub fn with_cutoff(&self, fock_cutoff: usize) -> Result<Self> {
        let space = HilbertSpace::new(self.space.qubit_levels(), fock_cutoff)?;
        Self::new(self.kind, self.params, self.schedule, space)
    }

    /// Static and drive parts, `H(eps) = static + eps * drive`.
    pub fn hamiltonian_parts(&self, ops: &OperatorSet) -> Result<(CMatrix, CMatrix)> {
        match self.kind {
            ModelKind::Jc2 => jc2_parts(&self.params, ops),
            ModelKind::QutritResonant => {
                let mut p = self.params;
                p.delta_r = 0.0;
                p.delta_e = 0.0;
                qutrit_parts(&p, ops)
            }
            ModelKind::QutritDetuned => qutrit_parts(&self.params, ops),
        }
    }

    pub fn collapse_operators(&self, ops: &OperatorSet) -> Vec<Collapse> {
        let p = &self.params;
        match self.kind {
            ModelKind::Jc2 => vec![
                Collapse::new("kappa_q", p.kappa_q, ops.sigma_minus()),
                Collapse::new("gamma_q", p.gamma_q, ops.projectors[EXCITED].clone()),
                Collapse::new("kappa_r", p.kappa_r, ops.a.clone()),
            ],
            ModelKind::QutritResonant | ModelKind::QutritDetuned => vec![
                Collapse::new("kappa_q", p.kappa_q, ops.q.clone()),
                Collapse::new("gamma_q", p.gamma_q, &ops.q_dag * &ops.q),
                Collapse::new("kappa_r", p.kappa_r, ops.a.clone()),
            ],
        }
    }

    pub fn epsilon(&self, t: f64) -> f64 {
        ramp_epsilon(t, self.schedule.k)
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn require_levels(ops: &OperatorSet, levels: usize) -> Result<()> {
    if ops.space.qubit_levels() != levels {
        return Err(Error::Model(format!(
            "operator set has {} qubit levels, expected {levels}",
            ops.space.qubit_levels()
        )));
    }
    Ok(())
}

fn jc2_parts(params: &SystemParams, ops: &OperatorSet) -> Result<(CMatrix, CMatrix)> {
    require_levels(ops, 2)?;
    let sm = ops.sigma_minus();
    let coupling = &ops.a_dag * &sm + &ops.a * sm.adjoint();
    let mut stat = coupling * real(params.omega);
    if params.delta_r != 0.0 {
        stat += &ops.number * real(params.delta_r);
    }
    if params.delta_e != 0.0 {
        stat += &ops.projectors[EXCITED] * real(params.delta_e);
    }
    let drive = (&ops.a + &ops.a_dag) * real(params.omega / 2.0);
    Ok((stat, drive))
}

fn qutrit_parts(params: &SystemParams, ops: &OperatorSet) -> Result<(CMatrix, CMatrix)> {
    require_levels(ops, 3)?;
    let coupling = &ops.a_dag * &ops.q + &ops.a * &ops.q_dag;
    let mut stat = coupling * real(params.omega);
    stat += &ops.projectors[EXCITED] * real(params.delta_e);
    stat += &ops.projectors[SECOND] * real(2.0 * params.delta_e - params.chi);
    stat += &ops.number * real(params.delta_r);
    let drive = (&ops.a + &ops.a_dag) * real(params.omega / 2.0);
    Ok((stat, drive))
}

/// `Omega[(a_dag |g><e| + a |e><g|) + eps (a_dag + a)/2]`, plus `delta_r a_dag a + delta_e |e><e|`
/// when the detunings are non-zero.
pub fn build_hamiltonian_jc2(epsilon: f64, params: &SystemParams, ops: &OperatorSet) -> Result<CMatrix> {
    let (s, d) = jc2_parts(params, ops)?;
    Ok(s + d * real(epsilon))
}

/// Qutrit Hamiltonian with the signal resonant with both qubit and resonator:
/// `-chi |f><f| + Omega[a_dag(|g><e| + sqrt2 |e><f| + eps/2) + h.c.]`.
pub fn build_hamiltonian_qutrit(epsilon: f64, params: &SystemParams, ops: &OperatorSet) -> Result<CMatrix> {
    let mut p = *params;
    p.delta_r = 0.0;
    p.delta_e = 0.0;
    let (s, d) = qutrit_parts(&p, ops)?;
    Ok(s + d * real(epsilon))
}

/// Qutrit Hamiltonian in the frame of the signal:
/// `delta_e |e><e| + (2 delta_e - chi)|f><f| + delta_r a_dag a + Omega[a_dag(|g><e| + sqrt2 |e><f| + eps/2) + h.c.]`.
pub fn build_hamiltonian_qutrit_detuned(
    epsilon: f64,
    params: &SystemParams,
    ops: &OperatorSet,
) -> Result<CMatrix> {
    let (s, d) = qutrit_parts(params, ops)?;
    Ok(s + d * real(epsilon))
}

/// A dissipative channel `rate * D[op]`.
#[derive(Debug, Clone)]
pub struct Collapse {
    pub label: String,
    pub rate: f64,
    pub op: CMatrix,
}

impl Collapse {
    pub fn new(label: impl Into<String>, rate: f64, op: CMatrix) -> Self {
        Self {
            label: label.into(),
            rate,
            op,
        }
    }
}

fn check_rates(collapse: &[Collapse]) -> Result<()> {
    for c in collapse {
        if !(c.rate >= 0.0) {
            return Err(Error::NegativeRate {
                channel: c.label.clone(),
                value: c.rate,
            });
        }
    }
    Ok(())
}

/// Dense evaluation of the Lindblad right-hand side.
pub fn lindblad_rhs(rho: &CMatrix, h: &CMatrix, collapse: &[Collapse]) -> Result<CMatrix> {
    check_rates(collapse)?;
    let d = rho.nrows();
    for m in std::iter::once(h).chain(collapse.iter().map(|c| &c.op)) {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.nrows(),
            });
        }
    }
    let mut out = (h * rho - rho * h) * (-CI);
    for c in collapse {
        if c.rate == 0.0 {
            continue;
        }
        let ld = c.op.adjoint();
        let ldl = &ld * &c.op;
        let term = &c.op * rho * &ld - (&ldl * rho + rho * &ldl) * real(0.5);
        out += term * real(c.rate);
    }
    Ok(out)
}

/// Row-compressed complex matrix carrying two value arrays on a shared
/// pattern, so that `A(eps) = A0 + eps A1` can be applied without rebuilding.
#[derive(Debug, Clone)]
struct AffineCsr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    base: Vec<Complex64>,
    slope: Vec<Complex64>,
}

impl AffineCsr {
    fn new(base: &CMatrix, slope: &CMatrix) -> Self {
        let n = base.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut b = Vec::new();
        let mut s = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (base[(i, j)], slope[(i, j)]);
                if x != C0 || y != C0 {
                    cols.push(j);
                    b.push(x);
                    s.push(y);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            base: b,
            slope: s,
        }
    }

    /// `out = (A0 + eps A1) * rhs`.
    fn mul_dense(&self, eps: f64, rhs: &CMatrix, out: &mut CMatrix) {
        if eps == 0.0 {
            self.mul_values(&self.base, rhs, out);
        } else {
            let vals: Vec<Complex64> = self
                .base
                .iter()
                .zip(&self.slope)
                .map(|(b, s)| b + s * eps)
                .collect();
            self.mul_values(&vals, rhs, out);
        }
    }

    fn mul_values(&self, vals: &[Complex64], rhs: &CMatrix, out: &mut CMatrix) {
        let n = rhs.nrows();
        let rows: Vec<(usize, usize)> = self.row_ptr.windows(2).map(|w| (w[0], w[1])).collect();
        for (col, dst) in rhs
            .as_slice()
            .chunks_exact(n)
            .zip(out.as_mut_slice().chunks_exact_mut(n))
        {
            for (d, &(s, e)) in dst.iter_mut().zip(&rows) {
                *d = vals[s..e]
                    .iter()
                    .zip(&self.cols[s..e])
                    .fold(C0, |acc, (v, &c)| acc + v * col[c]);
            }
        }
    }
}

/// Precompiled generator of the master equation.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    /// `K(eps) = H(eps) - (i/2) sum rate L^+ L`.
    effective: AffineCsr,
    /// `sqrt(rate) L`.
    jumps: Vec<AffineCsr>,
    radius: f64,
}

impl Liouvillian {
    pub fn new(h_static: &CMatrix, h_drive: &CMatrix, collapse: &[Collapse]) -> Result<Self> {
        check_rates(collapse)?;
        let dim = h_static.nrows();
        if !h_static.is_square() || h_drive.shape() != h_static.shape() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: h_drive.nrows(),
            });
        }
        let mut k0 = h_static.clone();
        let mut jumps = Vec::new();
        let zero = CMatrix::zeros(dim, dim);
        // the spread of H(eps) is convex in eps, so the endpoints bound it on [0, 1]
        let spread = |h: &CMatrix| {
            let ev = hermitian_eigenvalues(h);
            ev[ev.len() - 1] - ev[0]
        };
        let mut radius = spread(h_static).max(spread(&(h_static + h_drive)));
        for c in collapse {
            if c.op.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.op.nrows(),
                });
            }
            if c.rate == 0.0 {
                continue;
            }
            let ldl = c.op.adjoint() * &c.op;
            radius += c.rate * hermitian_eigenvalues(&ldl).iter().fold(0.0, |m: f64, x| m.max(*x));
            k0 -= ldl * Complex64::new(0.0, 0.5 * c.rate);
            jumps.push(AffineCsr::new(&(&c.op * real(c.rate.sqrt())), &zero));
        }
        Ok(Self {
            dim,
            effective: AffineCsr::new(&k0, h_drive),
            jumps,
            radius,
        })
    }

    pub fn from_model(model: &HamiltonianModel) -> Result<Self> {
        let ops = build_operators(model.space);
        let (s, d) = model.hamiltonian_parts(&ops)?;
        Self::new(&s, &d, &model.collapse_operators(&ops))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper bound on the generator's spectral radius for `eps` in `[0, 1]`.
    pub fn spectral_bound(&self) -> f64 {
        self.radius
    }

    /// Largest RK4 step inside the stability region for every `eps` in `[0, 1]`.
    pub fn stable_step(&self) -> f64 {
        if self.radius > 0.0 {
            RK4_STABILITY / self.radius
        } else {
            f64::INFINITY
        }
    }

    /// `out = L_eps(rho)`; `rho` must be Hermitian.
    fn apply(&self, eps: f64, rho: &CMatrix, out: &mut CMatrix, scratch: &mut Scratch) {
        self.effective.mul_dense(eps, rho, &mut scratch.m);
        // -i (K rho - rho K^+) = -i (M - M^+) for Hermitian rho
        let d = self.dim;
        for j in 0..d {
            for i in 0..d {
                out[(i, j)] = -CI * (scratch.m[(i, j)] - scratch.m[(j, i)].conj());
            }
        }
        for l in &self.jumps {
            // L rho L^+ = L (L rho)^+
            l.mul_dense(0.0, rho, &mut scratch.m);
            scratch.m.adjoint_to(&mut scratch.t);
            l.mul_dense(0.0, &scratch.t, &mut scratch.m);
            *out += &scratch.m;
        }
    }
}

struct Scratch {
    m: CMatrix,
    t: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Largest step attempted (us).
    pub dt_max: f64,
    /// Steps below this size abort with [`Error::StepUnderflow`] (us).
    pub dt_min: f64,
    /// Allowed disagreement of every observable between one step of `dt` and two of `dt/2`.
    pub tolerance: f64,
    /// Allowed `|tr(rho) - 1|` before the run is declared failed.
    pub trace_tolerance: f64,
    /// Evaluate the fidelity to the instantaneous dark state at each sample.
    pub record_fidelity: bool,
    /// Compute purity, Hermiticity defect and the lowest eigenvalue of rho at each sample.
    pub diagnostics: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            dt_max: 2e-3,
            dt_min: 1e-6,
            tolerance: 1e-6,
            trace_tolerance: 1e-4,
            record_fidelity: true,
            diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub epsilon: f64,
    pub p_g: f64,
    pub p_e: f64,
    /// Zero for two-level models.
    pub p_f: f64,
    pub n_avg: f64,
    /// `NaN` unless fidelities were requested.
    pub fidelity: f64,
    pub trace: f64,
    /// `NaN` unless diagnostics were requested.
    pub purity: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_state: CMatrix,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// RK4 is stable on the imaginary axis up to `2 sqrt 2`; kept slightly inside.
pub const RK4_STABILITY: f64 = 2.5;

pub const POPULATION_SLACK: f64 = 1e-6;

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory always holds the initial record")
    }

    /// Record whose `epsilon` is closest to the requested value.
    pub fn nearest_epsilon(&self, epsilon: f64) -> &TrajectoryRecord {
        self.records
            .iter()
            .min_by(|a, b| (a.epsilon - epsilon).abs().total_cmp(&(b.epsilon - epsilon).abs()))
            .expect("non-empty")
    }

    /// Population bounds, population sum and trace at every record; positivity
    /// and Hermiticity as well when diagnostics were recorded.
    pub fn check_invariants(&self, positivity_tol: f64) -> std::result::Result<(), String> {
        for r in &self.records {
            for (name, p) in [("P_g", r.p_g), ("P_e", r.p_e), ("P_f", r.p_f)] {
                if !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(&p) {
                    return Err(format!("{name} = {p} out of range at t = {}", r.t));
                }
            }
            let sum = r.p_g + r.p_e + r.p_f;
            if (sum - 1.0).abs() > POPULATION_SLACK {
                return Err(format!("populations sum to {sum} at t = {}", r.t));
            }
            if (r.trace - 1.0).abs() > POPULATION_SLACK {
                return Err(format!("trace {} at t = {}", r.trace, r.t));
            }
            if !r.min_eigenvalue.is_nan() && r.min_eigenvalue < -positivity_tol {
                return Err(format!("eigenvalue {} at t = {}", r.min_eigenvalue, r.t));
            }
            if !r.hermiticity_defect.is_nan() && r.hermiticity_defect > 1e-10 {
                return Err(format!("hermiticity defect {} at t = {}", r.hermiticity_defect, r.t));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Cheap {
    pops: [f64; 3],
    n_avg: f64,
    trace: f64,
}

fn cheap_observables(rho: &CMatrix, space: &HilbertSpace) -> Cheap {
    let mut pops = [0.0; 3];
    let mut n_avg = 0.0;
    for (q, pop) in pops.iter_mut().enumerate().take(space.qubit_levels()) {
        for n in 0..space.fock_dim() {
            let i = space.index(q, n);
            let p = rho[(i, i)].re;
            *pop += p;
            n_avg += n as f64 * p;
        }
    }
    Cheap {
        pops,
        n_avg,
        trace: pops.iter().sum(),
    }
}

fn observable_gap(a: &Cheap, b: &Cheap) -> f64 {
    let mut g = (a.n_avg - b.n_avg).abs().max((a.trace - b.trace).abs());
    for k in 0..3 {
        g = g.max((a.pops[k] - b.pops[k]).abs());
    }
    g
}

fn record(
    t: f64,
    epsilon: f64,
    rho: &CMatrix,
    space: &HilbertSpace,
    opts: &IntegratorOptions,
) -> Result<TrajectoryRecord> {
    let c = cheap_observables(rho, space);
    let fidelity = if opts.record_fidelity && epsilon < 1.0 {
        let (psi, _) = dark_state_with_residual(space, epsilon)?;
        psi.dotc(&(rho * &psi)).re
    } else {
        f64::NAN
    };
    let (purity, herm, min_ev) = if opts.diagnostics {
        let purity = rho.iter().map(|z| z.norm_sqr()).sum::<f64>();
        (purity, hermiticity_defect(rho), hermitian_eigenvalues(rho)[0])
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(TrajectoryRecord {
        t,
        epsilon,
        p_g: c.pops[GROUND],
        p_e: c.pops[EXCITED],
        p_f: c.pops[SECOND],
        n_avg: c.n_avg,
        fidelity,
        trace: c.trace,
        purity,
        hermiticity_defect: herm,
        min_eigenvalue: min_ev,
    })
}

struct Stepper<'a, F: Fn(f64) -> f64> {
    gen: &'a Liouvillian,
    eps: F,
    scratch: Scratch,
    k: [CMatrix; 4],
    stage: CMatrix,
}

impl<'a, F: Fn(f64) -> f64> Stepper<'a, F> {
    fn new(gen: &'a Liouvillian, eps: F) -> Self {
        let d = gen.dim;
        let z = || CMatrix::zeros(d, d);
        Self {
            gen,
            eps,
            scratch: Scratch { m: z(), t: z() },
            k: [z(), z(), z(), z()],
            stage: z(),
        }
    }

    fn rhs(&mut self, t: f64, rho_is_stage: bool, rho: &CMatrix, slot: usize) {
        let eps = (self.eps)(t);
        let src = if rho_is_stage { &self.stage } else { rho };
        let mut out = std::mem::replace(&mut self.k[slot], CMatrix::zeros(0, 0));
        self.gen.apply(eps, src, &mut out, &mut self.scratch);
        self.k[slot] = out;
    }

    /// One classical RK4 step. `k1` must already hold `L(t, rho)`.
    fn rk4_from_k1(&mut self, rho: &CMatrix, t: f64, h: f64, k1: &CMatrix) -> CMatrix {
        let hc = real(h / 2.0);
        self.stage.copy_from(rho);
        axpy(&mut self.stage, hc, k1);
        self.rhs(t + h / 2.0, true, rho, 1);
        self.stage.copy_from(rho);
        axpy(&mut self.stage, hc, &self.k[1]);
        self.rhs(t + h / 2.0, true, rho, 2);
        self.stage.copy_from(rho);
        axpy(&mut self.stage, real(h), &self.k[2]);
        self.rhs(t + h, true, rho, 3);
        let mut out = rho.clone();
        axpy(&mut out, real(h / 6.0), k1);
        axpy(&mut out, real(h / 3.0), &self.k[1]);
        axpy(&mut out, real(h / 3.0), &self.k[2]);
        axpy(&mut out, real(h / 6.0), &self.k[3]);
        out
    }

    fn k1(&mut self, t: f64, rho: &CMatrix) -> CMatrix {
        self.rhs(t, false, rho, 0);
        self.k[0].clone()
    }
}

/// `y += a x`.
fn axpy(y: &mut CMatrix, a: Complex64, x: &CMatrix) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

/// Integrates `rho0` under a precompiled generator with drive schedule
/// `eps(t)`, recording observables at `t = 0` and at every entry of `samples`
/// (sorted, in `(0, t_end]`; `t_end` itself is always recorded).
///
/// Step control: each step of size `dt` is compared against two steps of
/// `dt/2`; if any population, the mean photon number or the trace differ by
/// more than `tolerance` the step is retried at half size. Accepted steps use
/// the Richardson-extrapolated half-step result.
pub fn propagate<F: Fn(f64) -> f64>(
    gen: &Liouvillian,
    eps: F,
    space: &HilbertSpace,
    rho0: &QuantumState,
    t_end: f64,
    samples: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::OutOfDomain {
            name: "t_end",
            value: t_end,
            domain: "(0, inf)",
        });
    }
    if rho0.dim() != space.dim() || gen.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: rho0.dim(),
        });
    }
    rho0.validate()?;
    let mut rho = rho0.to_density();

    let mut targets: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t_end)
        .collect();
    targets.sort_by(|a, b| a.total_cmp(b));
    targets.dedup();
    targets.push(t_end);

    let mut records = vec![record(0.0, eps(0.0), &rho, space, opts)?];
    let mut stepper = Stepper::new(gen, &eps);
    let mut t = 0.0;
    let dt_cap = opts.dt_max.min(gen.stable_step());
    if dt_cap < opts.dt_min {
        return Err(Error::StepUnderflow { t: 0.0, dt: dt_cap });
    }
    let mut dt = dt_cap;
    let mut accepted = 0;
    let mut rejected = 0;

    for &target in &targets {
        while t < target {
            let remaining = target - t;
            // land exactly on the target rather than leaving a sliver step
            let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt.min(remaining) };
            let k1 = stepper.k1(t, &rho);
            let full = stepper.rk4_from_k1(&rho, t, h, &k1);
            let half_k1 = k1;
            let mid = stepper.rk4_from_k1(&rho, t, h / 2.0, &half_k1);
            let k1_mid = stepper.k1(t + h / 2.0, &mid);
            let fine = stepper.rk4_from_k1(&mid, t + h / 2.0, h / 2.0, &k1_mid);

            let gap = observable_gap(
                &cheap_observables(&full, space),
                &cheap_observables(&fine, space),
            );
            if gap > opts.tolerance {
                rejected += 1;
                dt = h / 2.0;
                if dt < opts.dt_min {
                    return Err(Error::StepUnderflow { t, dt });
                }
                continue;
            }
            // fine + (fine - full)/15, then re-Hermitize
            let mut next = fine * real(16.0 / 15.0) - full * real(1.0 / 15.0);
            let adj = next.adjoint();
            next += adj;
            next *= real(0.5);
            rho = next;
            t = if h == remaining { target } else { t + h };
            accepted += 1;

            let tr = crate::quantum::trace(&rho).re;
            if (tr - 1.0).abs() > opts.trace_tolerance {
                return Err(Error::TraceDrift { t, drift: tr - 1.0 });
            }
            if gap < opts.tolerance / 32.0 && h >= dt * 0.999 {
                dt = (2.0 * dt).min(dt_cap);
            }
        }
        records.push(record(t, eps(t), &rho, space, opts)?);
    }

    Ok(Trajectory {
        records,
        final_state: rho,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// `|g, 0><g, 0|` on `space`.
pub fn ground_vacuum(space: &HilbertSpace) -> QuantumState {
    QuantumState::Ket(space.basis_ket(GROUND, 0))
}

/// Integrates the model's master equation with the ramp `eps(t)` evaluated at every stage.
pub fn integrate(
    model: &HamiltonianModel,
    rho0: &QuantumState,
    t_end: f64,
    samples: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let gen = Liouvillian::from_model(model)?;
    let k = model.schedule.k;
    propagate(&gen, |t| ramp_epsilon(t, k), &model.space, rho0, t_end, samples, opts)
}

pub const CONVERGENCE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffStep {
    pub from: usize,
    pub to: usize,
    /// `(observable, |difference|)` for the final record.
    pub differences: Vec<(&'static str, f64)>,
}

impl CutoffStep {
    pub fn max(&self) -> (&'static str, f64) {
        self.differences
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or(("none", 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub steps: Vec<CutoffStep>,
    pub tolerance: f64,
}

impl ConvergenceReport {
    /// Worst observable of the last cutoff pair.
    pub fn worst(&self) -> (&'static str, f64) {
        self.steps.last().map(|s| s.max()).unwrap_or(("none", 0.0))
    }

    pub fn passed(&self) -> bool {
        self.worst().1 < self.tolerance
    }

    pub fn summary(&self) -> String {
        let (name, v) = self.worst();
        let pairs: Vec<String> = self
            .steps
            .iter()
            .map(|s| format!("{}->{}: {:.3e} ({})", s.from, s.to, s.max().1, s.max().0))
            .collect();
        format!(
            "{} (worst {name} = {v:.3e}, tolerance {:.1e}): {}",
            if self.passed() { "converged" } else { "NOT converged" },
            self.tolerance,
            pairs.join(", ")
        )
    }
}

fn final_observables(r: &TrajectoryRecord) -> Vec<(&'static str, f64)> {
    vec![
        ("P_g", r.p_g),
        ("P_e", r.p_e),
        ("P_f", r.p_f),
        ("n_avg", r.n_avg),
        ("fidelity", r.fidelity),
    ]
}

/// Re-runs the model from `|g,0>` at each cutoff and compares the final
/// observables of successive cutoffs. Passes when the last pair agrees within
/// [`CONVERGENCE_TOL`].
pub fn convergence_check(
    model: &HamiltonianModel,
    t_end: f64,
    cutoffs: &[usize],
    opts: &IntegratorOptions,
) -> Result<ConvergenceReport> {
    if cutoffs.len() < 2 || cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InsufficientData(
            "need at least two strictly increasing cutoffs".into(),
        ));
    }
    let finals: Vec<TrajectoryRecord> = cutoffs
        .par_iter()
        .map(|&n| {
            let m = model.with_cutoff(n)?;
            let tr = integrate(&m, &ground_vacuum(&m.space), t_end, &[], opts)?;
            Ok(*tr.last())
        })
        .collect::<Result<_>>()?;
    let steps = cutoffs
        .windows(2)
        .zip(finals.windows(2))
        .map(|(c, f)| CutoffStep {
            from: c[0],
            to: c[1],
            differences: final_observables(&f[0])
                .into_iter()
                .zip(final_observables(&f[1]))
                .map(|((name, a), (_, b))| {
                    let d = if a.is_nan() && b.is_nan() { 0.0 } else { (a - b).abs() };
                    (name, d)
                })
                .collect(),
        })
        .collect();
    Ok(ConvergenceReport {
        steps,
        tolerance: CONVERGENCE_TOL,
    })
}

/// Default Fock cutoff for a quench reaching `epsilon_max`.
pub fn default_cutoff(epsilon_max: f64) -> usize {
    if epsilon_max <= 0.9 {
        30
    } else {
        60
    }
}
