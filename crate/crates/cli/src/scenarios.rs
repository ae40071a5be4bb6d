use critsense::analytics::{dark_state_pe, dark_state_vector, fisher_of_time, iontrap_pe, mean_photon_dark, ramp_time};
use critsense::calibration::{
    crosstalk_apply, crosstalk_correct, extract_crosstalk_amplitude, extract_crosstalk_phase, gate_infidelity,
    synthetic_amplitude_sweep, synthetic_phase_sweep, CrosstalkMatrix, DrivePair,
};
use critsense::io;
use critsense::lindblad::{default_cutoff, ModelKind, Trajectory};
use critsense::protocols::{
    detuning_scan, error_budget, frequency_robustness_scan, rabi_method_sim, ramping_time_robustness,
    relative_error_scan, run_quench, DerivativeMethod, QuenchSpec, RateSet,
};
use critsense::quantum::{HilbertSpace, QuantumState};
use critsense::readout::{calibrate_drive_strength, fit_photon_distribution, rabi_forward, DecayModel, PhotonDistribution};
use critsense::{Error, Result};

use crate::config::{RunConfig, Scenario};

/// One emitted file: a bare file name and its contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
}

struct Outputs(Vec<Output>);

impl Outputs {
    fn add(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        f(&mut bytes)?;
        self.0.push(Output { name: name.into(), bytes });
        Ok(())
    }

    fn table(&mut self, name: &str, comments: &[(&str, f64)], header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        self.add(name, |b| {
            for (k, v) in comments {
                use std::io::Write;
                writeln!(b, "# {k} = {}", io::fmt_num(*v))?;
            }
            io::write_table(b, header, rows)
        })
    }
}

fn model_kind(name: &str) -> ModelKind {
    match name {
        "qutrit_resonant" => ModelKind::QutritResonant,
        "qutrit_detuned" => ModelKind::QutritDetuned,
        _ => ModelKind::Jc2,
    }
}

fn cutoff_or_default(n: usize, eps_max: f64) -> usize {
    if n == 0 {
        default_cutoff(eps_max)
    } else {
        n
    }
}

fn derivative(name: &str) -> DerivativeMethod {
    if name == "fit" {
        DerivativeMethod::Fit
    } else {
        DerivativeMethod::FiniteDifference
    }
}

const COMPARISON_HEADER: [&str; 9] = [
    "epsilon", "P_e", "P_e_dark", "P_e_ratio", "n_avg", "n_dark", "n_ratio", "fidelity", "P_f",
];

fn comparison_rows(tr: &Trajectory) -> Result<Vec<Vec<f64>>> {
    tr.records
        .iter()
        .map(|r| {
            let pe = dark_state_pe(r.epsilon)?;
            let n = mean_photon_dark(r.epsilon)?;
            let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
            Ok(vec![
                r.epsilon,
                r.p_e,
                pe,
                ratio(r.p_e, pe),
                r.n_avg,
                n,
                ratio(r.n_avg, n),
                r.fidelity,
                r.p_f,
            ])
        })
        .collect()
}

fn quench_outputs(out: &mut Outputs, spec: &QuenchSpec, prefix: &str) -> Result<()> {
    let tr = run_quench(spec)?;
    tr.check_invariants(1e-6)
        .map_err(|e| Error::Model(format!("trajectory invariant violated: {e}")))?;
    out.add(format!("{prefix}trajectory.csv"), |b| io::write_trajectory(b, &tr.records))?;
    out.table(
        &format!("{prefix}dark_state_comparison.csv"),
        &[("fock_cutoff", spec.fock_cutoff as f64), ("k_per_us", spec.params.k)],
        &COMPARISON_HEADER,
        &comparison_rows(&tr)?,
    )
}

fn quench(c: &RunConfig) -> Result<Vec<Output>> {
    let eps = c.number("epsilon_target");
    let spec = QuenchSpec::new(model_kind(c.text("model")), c.params, eps)
        .cutoff(cutoff_or_default(c.count("fock_cutoff"), eps))
        .step(c.number("epsilon_step"));
    let mut out = Outputs(Vec::new());
    quench_outputs(&mut out, &spec, "")?;
    if c.scenario == Scenario::Fig2Quench {
        let t_end = ramp_time(eps, c.params.k)?;
        let rows: Vec<Vec<f64>> = (0..=200)
            .map(|i| {
                let t = t_end * i as f64 / 200.0;
                vec![t, spec.model().map(|m| m.epsilon(t)).unwrap_or(f64::NAN), fisher_of_time(t, c.params.k)]
            })
            .collect();
        out.table("ramp.csv", &[], &["t_us", "epsilon", "fisher_ideal"], &rows)?;
    }
    Ok(out.0)
}

fn fisher(c: &RunConfig) -> Result<Vec<Output>> {
    let grid = c.grid("epsilon");
    let eps_max = grid.iter().copied().fold(0.0, f64::max);
    let budget = error_budget(
        grid,
        &c.params,
        cutoff_or_default(c.count("fock_cutoff"), eps_max),
        derivative(c.text("derivative")),
    )?;
    let mut out = Outputs(Vec::new());
    if c.scenario == Scenario::FisherScan {
        let rows: Vec<Vec<f64>> = budget
            .entries
            .iter()
            .map(|e| vec![e.epsilon, e.fisher_ideal, e.fisher_master])
            .collect();
        out.table("fisher.csv", &[], &["epsilon", "F_analytic", "F_simulated"], &rows)?;
    } else {
        out.add("budget.csv", |b| io::write_budget(b, &budget))?;
    }
    Ok(out.0)
}

fn frequency(c: &RunConfig) -> Result<Vec<Output>> {
    let eps = c.number("epsilon_w");
    let scan = frequency_robustness_scan(
        c.grid("detuning"),
        &c.params,
        eps,
        cutoff_or_default(c.count("fock_cutoff"), eps),
    )?;
    let mut out = Outputs(Vec::new());
    out.add("frequency_robustness.csv", |b| io::write_scan(b, &scan))?;
    Ok(out.0)
}

fn relative_error(c: &RunConfig) -> Result<Vec<Output>> {
    let base = RateSet::of(&c.params);
    let rates: Vec<RateSet> = c
        .grid("rate_scale")
        .iter()
        .map(|&s| RateSet {
            kappa_q: s * base.kappa_q,
            kappa_r: s * base.kappa_r,
            gamma_q: s * base.gamma_q,
        })
        .collect();
    let scans = relative_error_scan(c.grid("epsilon_w"), c.grid("k"), &rates, &c.params, c.count("fock_cutoff").max(1))?;
    let mut out = Outputs(Vec::new());
    for (i, s) in scans.iter().enumerate() {
        out.add(format!("relative_error_{i}.csv"), |b| io::write_scan(b, s))?;
        out.add(format!("relative_error_{i}.matrix"), |b| io::write_gnuplot_matrix(b, s, "D"))?;
    }
    Ok(out.0)
}

fn detuning(c: &RunConfig) -> Result<Vec<Output>> {
    let eps = c.number("epsilon_target");
    let cutoff = c.count("fock_cutoff").max(1);
    let scan = detuning_scan(c.grid("delta_r"), c.grid("delta_e"), &c.params, eps, cutoff)?;
    let best = scan
        .argmin("max_P_f")
        .ok_or_else(|| Error::Model("detuning scan produced no finite max_P_f".into()))?;
    let xy = scan.coordinates(best);
    let mut out = Outputs(Vec::new());
    out.add("detuning_scan.csv", |b| io::write_scan(b, &scan))?;
    out.add("detuning_max_pf.matrix", |b| io::write_gnuplot_matrix(b, &scan, "max_P_f"))?;
    let mut p = c.params;
    p.delta_r = xy[0];
    p.delta_e = xy[1];
    let spec = QuenchSpec::new(ModelKind::QutritDetuned, p, eps).cutoff(cutoff);
    quench_outputs(&mut out, &spec, "optimal_")?;
    Ok(out.0)
}

fn crosstalk(c: &RunConfig) -> Result<Vec<Output>> {
    let drive = c.number("drive_rate");
    let (a, phi) = (c.number("amplitude"), c.number("phase"));
    let tau = c.grid("tau");
    let amp_sweep = synthetic_amplitude_sweep(a * drive, c.grid("offset"), tau)?;
    let phase_sweep = synthetic_phase_sweep(a * drive, phi, c.grid("cancel_phase"), tau)?;
    let amp = extract_crosstalk_amplitude(&amp_sweep, drive)?;
    let phase = extract_crosstalk_phase(&phase_sweep)?;
    let m = CrosstalkMatrix::from_polar(amp.amplitude, phase, amp.amplitude, phase)?;
    let target = DrivePair::real(1.0, 1.0);
    let corrected = crosstalk_correct(&m, &target)?;
    let residual = crosstalk_apply(&m, &corrected).max_diff(&target);
    let mut out = Outputs(Vec::new());
    out.add("amplitude_sweep.csv", |b| io::write_sweep(b, io::SWEEP_HEADER, &amp_sweep))?;
    out.add("phase_sweep.csv", |b| io::write_sweep(b, io::PHASE_SWEEP_HEADER, &phase_sweep))?;
    let [v1, v2] = corrected.0;
    out.table(
        "crosstalk_extraction.csv",
        &[],
        &[
            "amplitude_true", "amplitude_fit", "phase_true", "phase_fit", "slowest_offset", "v1_re", "v1_im", "v2_re",
            "v2_im", "residual",
        ],
        &[vec![a, amp.amplitude, phi, phase, amp.offset, v1.re, v1.im, v2.re, v2.im, residual]],
    )?;
    Ok(out.0)
}

fn drive_calibration(c: &RunConfig) -> Result<Vec<Output>> {
    let (slope, t_pulse, omega_a, n_max) = (c.number("slope"), c.number("pulse_length"), c.number("omega_a"), c.count("n_max"));
    let tau = c.grid("tau");
    let amps = c.grid("amplitude");
    let fits: Vec<(f64, f64)> = amps
        .iter()
        .map(|&x| {
            let alpha = slope * x * t_pulse;
            let truth = PhotonDistribution::coherent(alpha * alpha, n_max)?;
            let signal = rabi_forward(&truth, omega_a, &DecayModel::none(), 1.0, tau)?;
            let fit = fit_photon_distribution(&signal, n_max, &DecayModel::none())?;
            Ok((truth.mean(), fit.distribution.mean()))
        })
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = amps.iter().zip(&fits).map(|(&x, f)| (x, f.1.sqrt())).collect();
    let cal = calibrate_drive_strength(&points, t_pulse)?;
    let rows: Vec<Vec<f64>> = (0..amps.len())
        .map(|i| vec![amps[i], fits[i].0, fits[i].1, cal.strengths[i], cal.residuals[i]])
        .collect();
    let mut out = Outputs(Vec::new());
    out.table(
        "drive_calibration.csv",
        &[("slope_true", slope), ("slope_fit", cal.slope), ("pulse_length_us", t_pulse)],
        &["amplitude", "n_mean_true", "n_mean_fit", "G_per_us", "residual"],
        &rows,
    )?;
    Ok(out.0)
}

/// Resonator photon-number distribution of the dark state, renormalized on `0..=n_max`.
pub fn dark_photon_distribution(epsilon: f64, n_max: usize) -> Result<PhotonDistribution> {
    let space = HilbertSpace::new(2, 60)?;
    let QuantumState::Ket(v) = dark_state_vector(&space, epsilon)? else {
        return Err(Error::Model("dark state is not a ket".into()));
    };
    let mut p: Vec<f64> = (0..=n_max.min(60))
        .map(|n| (0..2).map(|q| v[space.index(q, n)].norm_sqr()).sum())
        .collect();
    p.resize(n_max + 1, 0.0);
    let s: f64 = p.iter().sum();
    PhotonDistribution::new(p.into_iter().map(|x| x / s).collect())
}

fn tomography(c: &RunConfig) -> Result<Vec<Output>> {
    let (omega_a, n_max, kappa) = (c.number("omega_a"), c.count("n_max"), c.number("kappa_fit"));
    let decay = if kappa > 0.0 { DecayModel::new(kappa) } else { DecayModel::none() };
    let mut out = Outputs(Vec::new());
    let signal = match c.text("signal_csv") {
        "" => {
            let truth = dark_photon_distribution(c.number("epsilon"), n_max)?;
            out.add("photon_true.csv", |b| io::write_photon_distribution(b, &truth))?;
            rabi_forward(&truth, omega_a, &decay, 1.0, c.grid("tau"))?
        }
        path => io::read_rabi_signal(std::fs::File::open(path)?, omega_a, 1.0)?,
    };
    let fit = fit_photon_distribution(&signal, n_max, &decay)?;
    out.add("rabi_signal.csv", |b| io::write_rabi_signal(b, &signal))?;
    out.add("photon_fit.csv", |b| io::write_photon_distribution(b, &fit.distribution))?;
    Ok(out.0)
}

fn ramp_time_scan(c: &RunConfig) -> Result<Vec<Output>> {
    let eps = c.number("epsilon_target");
    let t_ref = ramp_time(eps, c.params.k)?;
    let t: Vec<f64> = c.grid("t_ratio").iter().map(|r| r * t_ref).collect();
    let scan = ramping_time_robustness(eps, &t, &c.params, c.count("fock_cutoff").max(1))?;
    let mut out = Outputs(Vec::new());
    out.add("ramp_time.csv", |b| io::write_scan(b, &scan))?;
    Ok(out.0)
}

fn rabi_compare(c: &RunConfig) -> Result<Vec<Output>> {
    let eps0 = c.number("eps0");
    let mut signal = Vec::new();
    let mut timing = Vec::new();
    for &n in c.counts("n") {
        let n = u32::try_from(n).map_err(|_| Error::Model(format!("bias index {n} too large")))?;
        for &r in c.grid("delta_eps_ratio") {
            let s = rabi_method_sim(eps0, n, r * eps0, 0.0)?;
            signal.push(vec![n as f64, s.t_n, r * eps0, s.delta_pe_exact, s.delta_pe_linear]);
        }
        for &dt in c.grid("delta_t") {
            let s = rabi_method_sim(eps0, n, 0.0, dt)?;
            timing.push(vec![n as f64, s.t_n, dt, s.timing_pe_exact, s.timing_pe_linear]);
        }
    }
    let mut out = Outputs(Vec::new());
    out.table("rabi_signal_error.csv", &[("eps0", eps0)], &["n", "t_n_us", "delta_eps", "delta_pe_exact", "delta_pe_linear"], &signal)?;
    out.table("rabi_timing_error.csv", &[("eps0", eps0)], &["n", "t_n_us", "delta_t_us", "delta_pe_exact", "delta_pe_linear"], &timing)?;
    Ok(out.0)
}

fn iontrap(c: &RunConfig) -> Result<Vec<Output>> {
    let (lambda, eta0) = (c.number("lambda"), c.number("eta0"));
    let rows: Vec<Vec<f64>> = c
        .grid("chi0")
        .iter()
        .map(|&chi0| Ok(vec![chi0, 2.0 * lambda / (eta0 * chi0), iontrap_pe(lambda, eta0, chi0)?]))
        .collect::<Result<_>>()?;
    let mut out = Outputs(Vec::new());
    out.table("iontrap.csv", &[("lambda", lambda), ("eta0", eta0)], &["chi0", "drive_ratio", "P_e"], &rows)?;
    Ok(out.0)
}

fn gate(c: &RunConfig) -> Result<Vec<Output>> {
    let (phi, theta) = (c.number("phi"), c.number("theta"));
    let rows: Vec<Vec<f64>> = c
        .grid("delta_eps")
        .iter()
        .map(|&d| Ok(vec![d, gate_infidelity(phi, d, theta)?, (phi * d / 2.0).sin().powi(2)]))
        .collect::<Result<_>>()?;
    let mut out = Outputs(Vec::new());
    out.table(
        "gate_infidelity.csv",
        &[("phi", phi), ("theta", theta)],
        &["delta_eps", "infidelity", "closed_form"],
        &rows,
    )?;
    Ok(out.0)
}

/// Runs the configured scenario and returns its files in emission order.
pub fn execute(c: &RunConfig) -> Result<Vec<Output>> {
    match c.scenario {
        Scenario::Fig2Quench | Scenario::FigS4Qutrit => quench(c),
        Scenario::FisherScan | Scenario::FigS9Budget => fisher(c),
        Scenario::FigS2Frequency => frequency(c),
        Scenario::FigS3Scan => relative_error(c),
        Scenario::FigS5Detuning => detuning(c),
        Scenario::FigS6Crosstalk => crosstalk(c),
        Scenario::FigS7Drive => drive_calibration(c),
        Scenario::FigS8Tomography => tomography(c),
        Scenario::Sec8RampTime => ramp_time_scan(c),
        Scenario::RabiCompare => rabi_compare(c),
        Scenario::IonTrap => iontrap(c),
        Scenario::FigS11Gate => gate(c),
    }
}
