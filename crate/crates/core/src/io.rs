//! CSV serialization. Numbers are written as `{:.15e}`; scan metadata goes in
//! leading `# key = value` comment lines, which the readers skip.

use std::io::{Read, Write};

use crate::calibration::SweepTrace;
use crate::error::{Error, Result};
use crate::lindblad::TrajectoryRecord;
use crate::protocols::{ErrorBudget, ScanResult};
use crate::readout::{PhotonDistribution, RabiSignal};

pub const TRAJECTORY_HEADER: [&str; 8] = ["t_us", "epsilon", "P_g", "P_e", "P_f", "n_avg", "fidelity", "trace"];
pub const RABI_HEADER: [&str; 2] = ["tau_us", "pe"];
pub const PHOTON_HEADER: [&str; 2] = ["n", "p"];
pub const SWEEP_HEADER: [&str; 3] = ["offset_rad_per_us", "tau_us", "pe"];
pub const PHASE_SWEEP_HEADER: [&str; 3] = ["phase_rad", "tau_us", "pe"];

/// Fixed, locale-independent scientific format with 16 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.15e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(r)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != *b) {
        return Err(Error::Parse(format!(
            "expected header {:?}, found {:?}",
            expected,
            found.iter().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: column {column}: not a number: {field:?}")))
}

fn numeric_rows<R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = reader(r);
    check_header(rd.headers()?, header)?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        rows.push(
            rec.iter()
                .zip(header)
                .map(|(f, c)| parse_f64(f, line, c))
                .collect::<Result<_>>()?,
        );
    }
    Ok(rows)
}

pub fn write_trajectory<W: Write>(w: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(TRAJECTORY_HEADER)?;
    for r in records {
        wr.write_record(
            [r.t, r.epsilon, r.p_g, r.p_e, r.p_f, r.n_avg, r.fidelity, r.trace].map(fmt_num),
        )?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Vec<TrajectoryRecord>> {
    Ok(numeric_rows(r, &TRAJECTORY_HEADER)?
        .into_iter()
        .map(|v| TrajectoryRecord {
            t: v[0],
            epsilon: v[1],
            p_g: v[2],
            p_e: v[3],
            p_f: v[4],
            n_avg: v[5],
            fidelity: v[6],
            trace: v[7],
            purity: f64::NAN,
            hermiticity_defect: f64::NAN,
            min_eigenvalue: f64::NAN,
        })
        .collect())
}

pub fn write_rabi_signal<W: Write>(w: W, s: &RabiSignal) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(RABI_HEADER)?;
    for (t, p) in s.tau.iter().zip(&s.pe) {
        wr.write_record([fmt_num(*t), fmt_num(*p)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `tau_us, pe`; `omega_a` and `pg0` are not part of the file.
pub fn read_rabi_signal<R: Read>(r: R, omega_a: f64, pg0: f64) -> Result<RabiSignal> {
    let rows = numeric_rows(r, &RABI_HEADER)?;
    let s = RabiSignal {
        tau: rows.iter().map(|v| v[0]).collect(),
        pe: rows.iter().map(|v| v[1]).collect(),
        omega_a,
        pg0,
    };
    s.validate()?;
    Ok(s)
}

pub fn write_photon_distribution<W: Write>(w: W, d: &PhotonDistribution) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(PHOTON_HEADER)?;
    for (n, p) in d.probs.iter().enumerate() {
        wr.write_record([n.to_string(), fmt_num(*p)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_photon_distribution<R: Read>(r: R) -> Result<PhotonDistribution> {
    let rows = numeric_rows(r, &PHOTON_HEADER)?;
    for (i, v) in rows.iter().enumerate() {
        if v[0] != i as f64 {
            return Err(Error::Parse(format!("row {i}: expected n = {i}, found {}", v[0])));
        }
    }
    PhotonDistribution::new(rows.into_iter().map(|v| v[1]).collect())
}

/// Long format, one row per `(setting, tau)`; `header` is [`SWEEP_HEADER`] or [`PHASE_SWEEP_HEADER`].
pub fn write_sweep<W: Write>(w: W, header: [&str; 3], sweep: &[SweepTrace]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(header)?;
    for s in sweep {
        for (t, p) in s.tau.iter().zip(&s.pe) {
            wr.write_record([fmt_num(s.setting), fmt_num(*t), fmt_num(*p)])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Groups consecutive rows with equal settings into traces.
pub fn read_sweep<R: Read>(r: R) -> Result<Vec<SweepTrace>> {
    let mut rd = reader(r);
    let h = rd.headers()?.clone();
    check_header(&h, &SWEEP_HEADER).or_else(|_| check_header(&h, &PHASE_SWEEP_HEADER))?;
    let mut out: Vec<SweepTrace> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(Error::Parse(format!("line {line}: expected 3 fields, found {}", rec.len())));
        }
        let v: Vec<f64> = rec
            .iter()
            .zip(h.iter())
            .map(|(f, c)| parse_f64(f, line, c))
            .collect::<Result<_>>()?;
        match out.last_mut() {
            Some(s) if s.setting == v[0] => {
                if !(v[1] > *s.tau.last().expect("non-empty trace")) {
                    return Err(Error::Parse(format!("line {line}: tau must increase within a trace")));
                }
                s.tau.push(v[1]);
                s.pe.push(v[2]);
            }
            _ => out.push(SweepTrace {
                setting: v[0],
                tau: vec![v[1]],
                pe: vec![v[2]],
            }),
        }
    }
    Ok(out)
}

/// One row per cell: axis coordinates, then quantities, then the flag column (0/1) if any.
pub fn write_scan<W: Write>(mut w: W, scan: &ScanResult) -> Result<()> {
    scan.validate()?;
    writeln!(w, "# {}", scan.title)?;
    for (k, v) in &scan.metadata {
        writeln!(w, "# {k} = {v}")?;
    }
    let mut wr = writer(w);
    let mut header: Vec<&str> = scan.axes.iter().map(|a| a.name.as_str()).collect();
    header.extend(scan.quantities.iter().map(String::as_str));
    if let Some((name, _)) = &scan.flags {
        header.push(name);
    }
    wr.write_record(&header)?;
    for cell in 0..scan.cell_count() {
        let mut row: Vec<String> = scan.coordinates(cell).into_iter().map(fmt_num).collect();
        row.extend(scan.values.iter().map(|q| fmt_num(q[cell])));
        if let Some((_, f)) = &scan.flags {
            row.push(if f[cell] { "1" } else { "0" }.into());
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Gnuplot `matrix nonuniform` layout of one quantity of a two-axis scan.
pub fn write_gnuplot_matrix<W: Write>(mut w: W, scan: &ScanResult, quantity: &str) -> Result<()> {
    if scan.axes.len() != 2 {
        return Err(Error::Model("gnuplot matrix output needs exactly two axes".into()));
    }
    let q = scan
        .quantity(quantity)
        .ok_or_else(|| Error::Model(format!("unknown quantity {quantity}")))?;
    let (rows, cols) = (&scan.axes[0].values, &scan.axes[1].values);
    write!(w, "{}", cols.len())?;
    for c in cols {
        write!(w, " {}", fmt_num(*c))?;
    }
    writeln!(w)?;
    for (i, r) in rows.iter().enumerate() {
        write!(w, "{}", fmt_num(*r))?;
        for j in 0..cols.len() {
            write!(w, " {}", fmt_num(q[i * cols.len() + j]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub const BUDGET_HEADER: [&str; 8] = [
    "epsilon",
    "F_ideal",
    "F_hamiltonian",
    "F_master",
    "P_e_hamiltonian",
    "P_e_master",
    "nonadiabatic",
    "decoherence",
];

pub fn write_budget<W: Write>(w: W, budget: &ErrorBudget) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(BUDGET_HEADER)?;
    for e in &budget.entries {
        wr.write_record(
            [
                e.epsilon,
                e.fisher_ideal,
                e.fisher_hamiltonian,
                e.fisher_master,
                e.pe_hamiltonian,
                e.pe_master,
                e.nonadiabatic,
                e.decoherence,
            ]
            .map(fmt_num),
        )?;
    }
    wr.flush()?;
    Ok(())
}

/// Generic numeric table with a named header row.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                found: r.len(),
            });
        }
        wr.write_record(r.iter().map(|x| fmt_num(*x)))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_is_fixed_scientific() {
        assert_eq!(fmt_num(0.5), "5.000000000000000e-1");
        assert_eq!(fmt_num(-1234.5), "-1.234500000000000e3");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn photon_round_trip_and_errors() {
        let d = PhotonDistribution::coherent(1.3, 6).unwrap();
        let mut buf = Vec::new();
        write_photon_distribution(&mut buf, &d).unwrap();
        let back = read_photon_distribution(buf.as_slice()).unwrap();
        assert!(back.tv_distance(&d) < 1e-15);
        assert!(read_photon_distribution("n,p\n0,0.5\n2,0.5\n".as_bytes()).is_err());
        assert!(read_photon_distribution("n,q\n0,1\n".as_bytes()).is_err());
        assert!(read_photon_distribution("n,p\n0,x\n".as_bytes()).is_err());
        assert!(read_photon_distribution("n,p\n0,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn sweep_grouping() {
        let text = "# synthetic\noffset_rad_per_us,tau_us,pe\n0,0,0\n0,1,0.5\n1,0,0\n1,1,0.2\n";
        let s = read_sweep(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].pe, vec![0.0, 0.2]);
        assert!(read_sweep("offset_rad_per_us,tau_us,pe\n0,1,0\n0,0,0\n".as_bytes()).is_err());
    }
}
