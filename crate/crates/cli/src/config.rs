//! Run configuration: a TOML document with three parts.
//!
//! ```toml
//! scenario = "fig2-quench"     # required
//! output = "out/fig2"          # optional, `--out` takes precedence
//!
//! [params]                     # optional; omitted entries keep device defaults
//! omega = { value = 20.9, unit = "MHz", times_two_pi = true }
//! kappa_q = { value = 0.05, unit = "MHz", times_two_pi = false }
//!
//! [settings]                   # scenario-specific, see `--list-scenarios`
//! epsilon_target = 0.99
//! epsilon = { start = 0.3, stop = 0.98, count = 35 }
//! detuning = { start = -0.2, stop = 0.2, count = 9, unit = "MHz", times_two_pi = true }
//! ```
//!
//! Every frequency-like quantity is a table with `value` (or a grid), `unit`
//! (`"MHz"` or `"rad_per_us"`) and `times_two_pi`; none of the three has a
//! default. The stored value is `value * 2pi` when `times_two_pi` is true and
//! `value` otherwise, in rad/us (angular) or 1/us (plain rates).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use critsense::analytics::SystemParams;
use toml::{Table, Value as Toml};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    Fig2Quench,
    FisherScan,
    FigS2Frequency,
    FigS3Scan,
    FigS4Qutrit,
    FigS5Detuning,
    FigS6Crosstalk,
    FigS7Drive,
    FigS8Tomography,
    Sec8RampTime,
    RabiCompare,
    FigS9Budget,
    IonTrap,
    FigS11Gate,
}

impl Scenario {
    pub const ALL: [Scenario; 14] = [
        Scenario::Fig2Quench,
        Scenario::FisherScan,
        Scenario::FigS2Frequency,
        Scenario::FigS3Scan,
        Scenario::FigS4Qutrit,
        Scenario::FigS5Detuning,
        Scenario::FigS6Crosstalk,
        Scenario::FigS7Drive,
        Scenario::FigS8Tomography,
        Scenario::Sec8RampTime,
        Scenario::RabiCompare,
        Scenario::FigS9Budget,
        Scenario::IonTrap,
        Scenario::FigS11Gate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2Quench => "fig2-quench",
            Scenario::FisherScan => "fisher-scan",
            Scenario::FigS2Frequency => "figS2-frequency",
            Scenario::FigS3Scan => "figS3-scan",
            Scenario::FigS4Qutrit => "figS4-qutrit",
            Scenario::FigS5Detuning => "figS5-detuning",
            Scenario::FigS6Crosstalk => "figS6-crosstalk",
            Scenario::FigS7Drive => "figS7-drive",
            Scenario::FigS8Tomography => "figS8-tomography",
            Scenario::Sec8RampTime => "sec8-ramp-time",
            Scenario::RabiCompare => "rabi-compare",
            Scenario::FigS9Budget => "figS9-budget",
            Scenario::IonTrap => "iontrap",
            Scenario::FigS11Gate => "figS11-gate",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Fig2Quench => "quench trajectory with dark-state comparison and the ramp profile",
            Scenario::FisherScan => "simulated versus analytic Fisher information along the quench",
            Scenario::FigS2Frequency => "P_e and photon number versus a common signal detuning",
            Scenario::FigS3Scan => "relative deviation D(eps_w, k) for scaled decay-rate sets",
            Scenario::FigS4Qutrit => "resonant qutrit quench: leakage to |f>",
            Scenario::FigS5Detuning => "max P_f over (delta_r, delta_e) and the quench at the optimum",
            Scenario::FigS6Crosstalk => "synthetic XY-crosstalk sweeps, extraction and correction",
            Scenario::FigS7Drive => "drive-strength calibration from coherent-state tomography",
            Scenario::FigS8Tomography => "photon-number tomography of the dark state from a Rabi signal",
            Scenario::Sec8RampTime => "P_e versus ramping time at fixed target epsilon",
            Scenario::RabiCompare => "conventional Rabi interferometry: exact versus linearized response",
            Scenario::FigS9Budget => "Fisher information error budget: non-adiabaticity and decoherence",
            Scenario::IonTrap => "ion-trap dark-state population versus Raman strength",
            Scenario::FigS11Gate => "rotation-gate infidelity from a drive-strength error",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Setting {
    Number(f64),
    Count(usize),
    Counts(Vec<usize>),
    Grid(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Number,
    Frequency,
    Count,
    Counts,
    Grid,
    FrequencyGrid,
    Choice(&'static [&'static str]),
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Any,
    /// `[0, 1)`
    Epsilon,
    Positive,
    NonNegative,
}

impl Domain {
    fn contains(self, x: f64) -> bool {
        x.is_finite()
            && match self {
                Domain::Any => true,
                Domain::Epsilon => (0.0..1.0).contains(&x),
                Domain::Positive => x > 0.0,
                Domain::NonNegative => x >= 0.0,
            }
    }

    fn describe(self) -> &'static str {
        match self {
            Domain::Any => "finite",
            Domain::Epsilon => "[0, 1)",
            Domain::Positive => "(0, inf)",
            Domain::NonNegative => "[0, inf)",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SettingSpec {
    pub key: &'static str,
    pub kind: Kind,
    pub domain: Domain,
    pub default: Setting,
    pub help: &'static str,
}

fn spec(key: &'static str, kind: Kind, domain: Domain, default: Setting, help: &'static str) -> SettingSpec {
    SettingSpec {
        key,
        kind,
        domain,
        default,
        help,
    }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

const MODELS: &[&str] = &["jc2", "qutrit_resonant", "qutrit_detuned"];
const DERIVATIVES: &[&str] = &["finite_difference", "fit"];

/// Recognized settings of a scenario with their defaults (frequencies already in rad/us or 1/us).
pub fn schema(s: Scenario) -> Vec<SettingSpec> {
    use Domain::*;
    use Setting as V;
    let two_pi = 2.0 * PI;
    let cutoff = |d: usize| {
        spec(
            "fock_cutoff",
            Kind::Count,
            NonNegative,
            V::Count(d),
            "Fock cutoff N_max (0 picks 30 up to eps 0.9 and 60 beyond)",
        )
    };
    let quench = |model: &'static str, eps: f64| {
        vec![
            spec("model", Kind::Choice(MODELS), Any, V::Text(model.into()), "jc2 | qutrit_resonant | qutrit_detuned"),
            spec("epsilon_target", Kind::Number, Epsilon, V::Number(eps), "final epsilon of the ramp"),
            cutoff(0),
            spec("epsilon_step", Kind::Number, Positive, V::Number(1e-3), "epsilon spacing of recorded samples"),
        ]
    };
    let fisher = |grid: Vec<f64>| {
        vec![
            spec("epsilon", Kind::Grid, Epsilon, V::Grid(grid), "strictly increasing epsilon grid"),
            spec("derivative", Kind::Choice(DERIVATIVES), Any, V::Text("finite_difference".into()), "finite_difference | fit"),
            cutoff(0),
        ]
    };
    match s {
        Scenario::Fig2Quench => quench("jc2", 0.99),
        Scenario::FigS4Qutrit => quench("qutrit_resonant", 0.98),
        Scenario::FisherScan => fisher(linspace(0.3, 0.98, 35)),
        Scenario::FigS9Budget => fisher(vec![0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.98, 0.985]),
        Scenario::FigS2Frequency => vec![
            spec("detuning", Kind::FrequencyGrid, Any, V::Grid(linspace(-0.2 * two_pi, 0.2 * two_pi, 9)), "common signal detuning grid"),
            spec("epsilon_w", Kind::Number, Epsilon, V::Number(0.98), "working point"),
            cutoff(0),
        ],
        Scenario::FigS3Scan => vec![
            spec("epsilon_w", Kind::Grid, Epsilon, V::Grid(vec![0.8, 0.85, 0.9, 0.95, 0.98]), "working points"),
            spec("k", Kind::FrequencyGrid, Positive, V::Grid(vec![2.0, 5.0, 10.0, 20.0, 30.0]), "ramp coefficients"),
            spec("rate_scale", Kind::Grid, NonNegative, V::Grid(vec![0.0, 1.0, 2.0]), "multipliers applied to all decay rates"),
            cutoff(30),
        ],
        Scenario::FigS5Detuning => vec![
            spec("delta_r", Kind::FrequencyGrid, Any, V::Grid(linspace(-2.4 * two_pi, -0.8 * two_pi, 5)), "resonator detuning grid"),
            spec("delta_e", Kind::FrequencyGrid, Any, V::Grid(linspace(0.2 * two_pi, 1.8 * two_pi, 5)), "qubit detuning grid"),
            spec("epsilon_target", Kind::Number, Epsilon, V::Number(0.98), "final epsilon of each quench"),
            cutoff(30),
        ],
        Scenario::FigS6Crosstalk => vec![
            spec("drive_rate", Kind::Frequency, Positive, V::Number(10.0 * two_pi), "Rabi rate of the pulse on its own qubit"),
            spec("amplitude", Kind::Number, NonNegative, V::Number(0.1), "crosstalk amplitude A"),
            spec("phase", Kind::Number, Any, V::Number(2.0), "crosstalk phase (rad)"),
            spec("offset", Kind::FrequencyGrid, Any, V::Grid(linspace(-2.0 * two_pi, 2.0 * two_pi, 41)), "drive frequency offsets"),
            spec("cancel_phase", Kind::Grid, Any, V::Grid((0..72).map(|i| i as f64 * two_pi / 72.0).collect()), "cancellation phases (rad)"),
            spec("tau", Kind::Grid, NonNegative, V::Grid(linspace(0.0, 2.0, 201)), "pulse lengths (us)"),
        ],
        Scenario::FigS7Drive => vec![
            spec("slope", Kind::Frequency, Positive, V::Number(20.0), "true drive strength per amplitude unit"),
            spec("amplitude", Kind::Grid, Positive, V::Grid(linspace(0.1, 0.8, 8)), "pulse amplitudes"),
            spec("pulse_length", Kind::Number, Positive, V::Number(0.1), "drive pulse length (us)"),
            spec("omega_a", Kind::Frequency, Positive, V::Number(20.9 * two_pi), "ancilla-resonator coupling"),
            spec("n_max", Kind::Count, Positive, V::Count(10), "largest fitted Fock level"),
            spec("tau", Kind::Grid, NonNegative, V::Grid(linspace(0.0, 1.0, 201)), "ancilla interaction times (us)"),
        ],
        Scenario::FigS8Tomography => vec![
            spec("epsilon", Kind::Number, Epsilon, V::Number(0.964), "dark-state epsilon"),
            spec("omega_a", Kind::Frequency, Positive, V::Number(20.9 * two_pi), "ancilla-resonator coupling"),
            spec("n_max", Kind::Count, Positive, V::Count(10), "largest fitted Fock level"),
            spec("kappa_fit", Kind::Frequency, NonNegative, V::Number(0.0), "fitted resonator decay rate"),
            spec("tau", Kind::Grid, NonNegative, V::Grid(linspace(0.0, 1.0, 201)), "ancilla interaction times (us)"),
            spec("signal_csv", Kind::Text, Any, V::Text(String::new()), "optional measured signal (tau_us, pe); empty for synthetic"),
        ],
        Scenario::Sec8RampTime => vec![
            spec("epsilon_target", Kind::Number, Epsilon, V::Number(0.985), "target epsilon"),
            spec("t_ratio", Kind::Grid, Positive, V::Grid(linspace(0.7, 1.3, 7)), "ramping times in units of T at the configured k"),
            cutoff(60),
        ],
        Scenario::RabiCompare => vec![
            spec("eps0", Kind::Frequency, Positive, V::Number(two_pi), "bias signal strength"),
            spec("n", Kind::Counts, Positive, V::Counts(vec![1, 3, 5]), "odd bias-point indices"),
            spec("delta_eps_ratio", Kind::Grid, Any, V::Grid(linspace(-0.02, 0.02, 9)), "signal errors relative to eps0"),
            spec("delta_t", Kind::Grid, Any, V::Grid(vec![0.0, 0.001, 0.002, 0.004, 0.008]), "timing errors (us)"),
        ],
        Scenario::IonTrap => vec![
            spec("lambda", Kind::Frequency, NonNegative, V::Number(0.5 * two_pi), "signal coupling"),
            spec("eta0", Kind::Number, Positive, V::Number(0.1), "Lamb-Dicke parameter"),
            spec("chi0", Kind::FrequencyGrid, Positive, V::Grid(linspace(10.2 * two_pi, 50.0 * two_pi, 40)), "Raman strengths"),
        ],
        Scenario::FigS11Gate => vec![
            spec("phi", Kind::Number, NonNegative, V::Number(PI), "rotation angle (rad)"),
            spec("theta", Kind::Number, Any, V::Number(0.0), "rotation axis angle in the xy plane (rad)"),
            spec("delta_eps", Kind::Grid, Any, V::Grid(linspace(0.0, 0.1, 21)), "relative drive-strength errors"),
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub params: SystemParams,
    pub settings: BTreeMap<&'static str, Setting>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    fn get(&self, key: &str) -> &Setting {
        self.settings
            .get(key)
            .unwrap_or_else(|| panic!("setting {key} is not in the {} schema", self.scenario))
    }

    pub fn number(&self, key: &str) -> f64 {
        match self.get(key) {
            Setting::Number(x) => *x,
            other => panic!("setting {key} is {other:?}, not a number"),
        }
    }

    pub fn count(&self, key: &str) -> usize {
        match self.get(key) {
            Setting::Count(n) => *n,
            other => panic!("setting {key} is {other:?}, not a count"),
        }
    }

    pub fn counts(&self, key: &str) -> &[usize] {
        match self.get(key) {
            Setting::Counts(n) => n,
            other => panic!("setting {key} is {other:?}, not a count list"),
        }
    }

    pub fn grid(&self, key: &str) -> &[f64] {
        match self.get(key) {
            Setting::Grid(g) => g,
            other => panic!("setting {key} is {other:?}, not a grid"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.get(key) {
            Setting::Text(t) => t,
            other => panic!("setting {key} is {other:?}, not text"),
        }
    }
}

/// Every problem found in a config, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const PARAM_FIELDS: [&str; 8] = ["omega", "k", "kappa_q", "kappa_r", "gamma_q", "chi", "delta_r", "delta_e"];

fn number(v: &Toml) -> Option<f64> {
    match v {
        Toml::Float(x) => Some(*x),
        Toml::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Reads `unit` and `times_two_pi` of a frequency table; returns the multiplier.
fn unit_scale(path: &str, t: &Table, errors: &mut Vec<String>) -> Option<f64> {
    let unit = match t.get("unit") {
        None => {
            errors.push(format!("{path}: missing unit flag `unit` (\"MHz\" or \"rad_per_us\")"));
            None
        }
        Some(Toml::String(u)) if u == "MHz" || u == "rad_per_us" => Some(()),
        Some(other) => {
            errors.push(format!("{path}.unit: expected \"MHz\" or \"rad_per_us\", found {other}"));
            None
        }
    };
    let two_pi = match t.get("times_two_pi") {
        None => {
            errors.push(format!("{path}: missing unit flag `times_two_pi` (true or false)"));
            None
        }
        Some(Toml::Boolean(b)) => Some(*b),
        Some(other) => {
            errors.push(format!("{path}.times_two_pi: expected a boolean, found {other}"));
            None
        }
    };
    unit?;
    Some(if two_pi? { 2.0 * PI } else { 1.0 })
}

fn check_keys(path: &str, t: &Table, allowed: &[&str], errors: &mut Vec<String>) {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            errors.push(format!("{path}: unknown key `{k}`"));
        }
    }
}

fn frequency(path: &str, v: &Toml, errors: &mut Vec<String>) -> Option<f64> {
    let Toml::Table(t) = v else {
        errors.push(format!(
            "{path}: frequency-like values need unit flags: {{ value = ..., unit = \"MHz\", times_two_pi = ... }}"
        ));
        return None;
    };
    check_keys(path, t, &["value", "unit", "times_two_pi"], errors);
    let scale = unit_scale(path, t, errors);
    let value = match t.get("value").map(number) {
        Some(Some(x)) => Some(x),
        Some(None) => {
            errors.push(format!("{path}.value: expected a number"));
            None
        }
        None => {
            errors.push(format!("{path}: missing `value`"));
            None
        }
    };
    Some(value? * scale?)
}

fn grid_from_table(path: &str, t: &Table, errors: &mut Vec<String>) -> Option<Vec<f64>> {
    if let Some(v) = t.get("values") {
        if ["start", "stop", "count"].iter().any(|k| t.contains_key(*k)) {
            errors.push(format!("{path}: give either `values` or `start`/`stop`/`count`, not both"));
            return None;
        }
        return grid_array(&format!("{path}.values"), v, errors);
    }
    let mut field = |k: &str| match t.get(k).map(number) {
        Some(Some(x)) => Some(x),
        Some(None) => {
            errors.push(format!("{path}.{k}: expected a number"));
            None
        }
        None => {
            errors.push(format!("{path}: missing `{k}`"));
            None
        }
    };
    let (start, stop, count) = (field("start"), field("stop"), field("count"));
    let count = count?;
    if !(count >= 1.0 && count.fract() == 0.0 && count <= 1e6) {
        errors.push(format!("{path}.count: expected an integer in [1, 1000000], found {count}"));
        return None;
    }
    Some(linspace(start?, stop?, count as usize))
}

fn grid_array(path: &str, v: &Toml, errors: &mut Vec<String>) -> Option<Vec<f64>> {
    let Toml::Array(a) = v else {
        errors.push(format!("{path}: expected an array of numbers"));
        return None;
    };
    let mut out = Vec::with_capacity(a.len());
    for (i, x) in a.iter().enumerate() {
        match number(x) {
            Some(x) => out.push(x),
            None => {
                errors.push(format!("{path}[{i}]: expected a number, found {x}"));
                return None;
            }
        }
    }
    if out.is_empty() {
        errors.push(format!("{path}: grid is empty"));
        return None;
    }
    Some(out)
}

fn parse_setting(path: &str, s: &SettingSpec, v: &Toml, errors: &mut Vec<String>) -> Option<Setting> {
    let before = errors.len();
    let value = match s.kind {
        Kind::Number => match number(v) {
            Some(x) => Setting::Number(x),
            None => {
                errors.push(format!("{path}: expected a number, found {v}"));
                return None;
            }
        },
        Kind::Frequency => Setting::Number(frequency(path, v, errors)?),
        Kind::Count => match v {
            Toml::Integer(i) if *i >= 0 => Setting::Count(*i as usize),
            _ => {
                errors.push(format!("{path}: expected a non-negative integer, found {v}"));
                return None;
            }
        },
        Kind::Counts => match v {
            Toml::Array(a) if !a.is_empty() => {
                let mut out = Vec::new();
                for x in a {
                    match x {
                        Toml::Integer(i) if *i >= 0 => out.push(*i as usize),
                        _ => {
                            errors.push(format!("{path}: expected non-negative integers, found {x}"));
                            return None;
                        }
                    }
                }
                Setting::Counts(out)
            }
            _ => {
                errors.push(format!("{path}: expected a non-empty array of integers"));
                return None;
            }
        },
        Kind::Grid => match v {
            Toml::Table(t) => {
                check_keys(path, t, &["values", "start", "stop", "count"], errors);
                Setting::Grid(grid_from_table(path, t, errors)?)
            }
            _ => Setting::Grid(grid_array(path, v, errors)?),
        },
        Kind::FrequencyGrid => {
            let Toml::Table(t) = v else {
                errors.push(format!(
                    "{path}: frequency-like grids need unit flags: {{ values = [...], unit = \"MHz\", times_two_pi = ... }}"
                ));
                return None;
            };
            check_keys(path, t, &["values", "start", "stop", "count", "unit", "times_two_pi"], errors);
            let scale = unit_scale(path, t, errors);
            let g = grid_from_table(path, t, errors)?;
            let scale = scale?;
            Setting::Grid(g.into_iter().map(|x| x * scale).collect())
        }
        Kind::Choice(options) => match v {
            Toml::String(t) if options.contains(&t.as_str()) => Setting::Text(t.clone()),
            _ => {
                errors.push(format!("{path}: expected one of {options:?}, found {v}"));
                return None;
            }
        },
        Kind::Text => match v {
            Toml::String(t) => Setting::Text(t.clone()),
            _ => {
                errors.push(format!("{path}: expected a string, found {v}"));
                return None;
            }
        },
    };
    if errors.len() > before {
        return None;
    }
    let out_of_domain: Vec<f64> = match &value {
        Setting::Number(x) => vec![*x],
        Setting::Grid(g) => g.clone(),
        Setting::Count(n) => vec![*n as f64],
        Setting::Counts(n) => n.iter().map(|&x| x as f64).collect(),
        Setting::Text(_) => vec![],
    }
    .into_iter()
    .filter(|x| !s.domain.contains(*x))
    .collect();
    if let Some(x) = out_of_domain.first() {
        errors.push(format!("{path} = {x} is outside {}", s.domain.describe()));
        return None;
    }
    Some(value)
}

fn parse_params(t: &Table, errors: &mut Vec<String>) -> SystemParams {
    let mut p = SystemParams::device();
    for (k, v) in t {
        let path = format!("params.{k}");
        let Some(slot) = (match k.as_str() {
            "omega" => Some(&mut p.omega),
            "k" => Some(&mut p.k),
            "kappa_q" => Some(&mut p.kappa_q),
            "kappa_r" => Some(&mut p.kappa_r),
            "gamma_q" => Some(&mut p.gamma_q),
            "chi" => Some(&mut p.chi),
            "delta_r" => Some(&mut p.delta_r),
            "delta_e" => Some(&mut p.delta_e),
            _ => None,
        }) else {
            errors.push(format!("{path}: unknown parameter (expected one of {PARAM_FIELDS:?})"));
            continue;
        };
        if let Some(x) = frequency(&path, v, errors) {
            let ok = match k.as_str() {
                "omega" => x > 0.0,
                "delta_r" | "delta_e" => true,
                _ => x >= 0.0,
            };
            if !ok || !x.is_finite() {
                let what = if k == "omega" { "must be positive" } else { "must be a non-negative rate" };
                errors.push(format!("{path} = {x} {what}"));
            }
            *slot = x;
        }
    }
    p
}

/// Parses and validates a run configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {}", e.message())]))?;
    let mut errors = Vec::new();
    check_keys("config", &doc, &["scenario", "output", "params", "settings"], &mut errors);

    let scenario = match doc.get("scenario") {
        None => {
            errors.push("scenario: missing (see --list-scenarios)".into());
            None
        }
        Some(Toml::String(name)) => {
            let s = Scenario::from_name(name);
            if s.is_none() {
                let known: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                errors.push(format!("scenario: unknown scenario `{name}` (known: {})", known.join(", ")));
            }
            s
        }
        Some(other) => {
            errors.push(format!("scenario: expected a string, found {other}"));
            None
        }
    };

    let output = match doc.get("output") {
        None => None,
        Some(Toml::String(p)) => Some(PathBuf::from(p)),
        Some(other) => {
            errors.push(format!("output: expected a path string, found {other}"));
            None
        }
    };

    let params = match doc.get("params") {
        None => SystemParams::device(),
        Some(Toml::Table(t)) => parse_params(t, &mut errors),
        Some(_) => {
            errors.push("params: expected a table".into());
            SystemParams::device()
        }
    };

    let empty = Table::new();
    let given = match doc.get("settings") {
        None => &empty,
        Some(Toml::Table(t)) => t,
        Some(_) => {
            errors.push("settings: expected a table".into());
            &empty
        }
    };

    let mut settings = BTreeMap::new();
    if let Some(s) = scenario {
        let sch = schema(s);
        for k in given.keys() {
            if !sch.iter().any(|x| x.key == k) {
                errors.push(format!("settings.{k}: not a setting of {s}"));
            }
        }
        for item in &sch {
            let value = match given.get(item.key) {
                Some(v) => parse_setting(&format!("settings.{}", item.key), item, v, &mut errors),
                None => Some(item.default.clone()),
            };
            if let Some(v) = value {
                settings.insert(item.key, v);
            }
        }
    }

    match scenario {
        Some(scenario) if errors.is_empty() => Ok(RunConfig {
            scenario,
            params,
            settings,
            output,
        }),
        _ => Err(ConfigErrors(errors)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_device_defaults() {
        let c = parse_config("scenario = \"fig2-quench\"").unwrap();
        assert_eq!(c.params, SystemParams::device());
        assert_eq!(c.text("model"), "jc2");
        assert_eq!(c.number("epsilon_target"), 0.99);
    }

    #[test]
    fn unit_flags_scale_values() {
        let c = parse_config(
            r#"
            scenario = "fig2-quench"
            [params]
            omega = { value = 20.9, unit = "MHz", times_two_pi = true }
            kappa_q = { value = 0.05, unit = "MHz", times_two_pi = false }
            delta_r = { value = -1.6, unit = "rad_per_us", times_two_pi = true }
            "#,
        )
        .unwrap();
        assert_eq!(c.params.omega, 2.0 * PI * 20.9);
        assert_eq!(c.params.kappa_q, 0.05);
        assert_eq!(c.params.delta_r, -1.6 * 2.0 * PI);
    }

    #[test]
    fn missing_flag_is_an_error() {
        let e = parse_config("scenario = \"fig2-quench\"\n[params]\nomega = { value = 20.9, unit = \"MHz\" }").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert!(e.0[0].contains("params.omega") && e.0[0].contains("times_two_pi"));
        let e = parse_config("scenario = \"fig2-quench\"\n[params]\nomega = 131.3").unwrap_err();
        assert!(e.0[0].contains("unit flags"));
    }

    #[test]
    fn all_errors_are_collected() {
        let e = parse_config(
            r#"
            scenario = "fig2-quench"
            colour = "blue"
            [params]
            kappa_r = { value = -1.0, unit = "MHz", times_two_pi = false }
            chi = { value = 245, unit = "GHz", times_two_pi = true }
            [settings]
            epsilon_target = 1.0
            fock_cutoff = -3
            "#,
        )
        .unwrap_err();
        let text = e.to_string();
        assert_eq!(e.0.len(), 5, "{text}");
        for needle in ["colour", "params.kappa_r", "params.chi.unit", "settings.epsilon_target", "settings.fock_cutoff"] {
            assert!(text.contains(needle), "missing {needle} in {text}");
        }
    }

    #[test]
    fn grids_and_unknown_scenarios() {
        let c = parse_config(
            r#"
            scenario = "figS2-frequency"
            [settings]
            detuning = { start = -1, stop = 1, count = 3, unit = "MHz", times_two_pi = true }
            "#,
        )
        .unwrap();
        assert_eq!(c.grid("detuning"), &[-2.0 * PI, 0.0, 2.0 * PI]);
        let e = parse_config("scenario = \"fig9\"").unwrap_err();
        assert!(e.0[0].contains("unknown scenario"));
        assert!(parse_config("scenario = ").is_err());
    }
}
