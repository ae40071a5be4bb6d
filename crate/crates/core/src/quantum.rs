//! Dense complex linear algebra on the truncated qubit(-qutrit) x Fock space.
//!
//! Basis ordering is qubit-major: `index = qubit_index * (N_max + 1) + fock_index`,
//! with qubit levels `g = 0`, `e = 1`, `f = 2`.
//!
//! The bosonic ladder is hard-truncated: `a_dag |N_max>` is dropped, so
//! `[a, a_dag]` is the identity everywhere except the top Fock level, where it
//! equals `-N_max`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const C0: Complex64 = Complex64::new(0.0, 0.0);
pub const C1: Complex64 = Complex64::new(1.0, 0.0);
pub const CI: Complex64 = Complex64::new(0.0, 1.0);

pub const GROUND: usize = 0;
pub const EXCITED: usize = 1;
pub const SECOND: usize = 2;

/// Tolerance used when a matrix is asserted to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertSpace {
    qubit_levels: usize,
    fock_cutoff: usize,
}

impl HilbertSpace {
    pub fn new(qubit_levels: usize, fock_cutoff: usize) -> Result<Self> {
        if !(2..=3).contains(&qubit_levels) {
            return Err(Error::InvalidSpace(format!(
                "qubit_levels must be 2 or 3, got {qubit_levels}"
            )));
        }
        if fock_cutoff < 1 {
            return Err(Error::InvalidSpace("fock cutoff must be >= 1".into()));
        }
        Ok(Self {
            qubit_levels,
            fock_cutoff,
        })
    }

    pub fn qubit_levels(&self) -> usize {
        self.qubit_levels
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.qubit_levels * self.fock_dim()
    }

    pub fn index(&self, qubit: usize, fock: usize) -> usize {
        debug_assert!(qubit < self.qubit_levels && fock <= self.fock_cutoff);
        qubit * self.fock_dim() + fock
    }

    /// Computational basis ket `|qubit, n>`.
    pub fn basis_ket(&self, qubit: usize, fock: usize) -> CVector {
        let mut v = CVector::zeros(self.dim());
        v[self.index(qubit, fock)] = C1;
        v
    }
}

/// All operators of the model lifted to the composite space.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub space: HilbertSpace,
    /// Photon annihilation `a`.
    pub a: CMatrix,
    pub a_dag: CMatrix,
    /// Qubit lowering `q` (`q|e> = |g>`, `q|f> = sqrt(2)|e>`).
    pub q: CMatrix,
    pub q_dag: CMatrix,
    /// `a_dag a`.
    pub number: CMatrix,
    pub identity: CMatrix,
    /// `|x><x|` for each qubit level, lifted.
    pub projectors: Vec<CMatrix>,
}

impl OperatorSet {
    /// Lifted `|x><y|` on the qubit factor.
    pub fn transition(&self, x: usize, y: usize) -> CMatrix {
        let mut t = CMatrix::zeros(self.space.qubit_levels, self.space.qubit_levels);
        t[(x, y)] = C1;
        t.kronecker(&CMatrix::identity(self.space.fock_dim(), self.space.fock_dim()))
    }

    /// Qubit-only `|g><e|`, lifted (equal to `q` for two levels).
    pub fn sigma_minus(&self) -> CMatrix {
        self.transition(GROUND, EXCITED)
    }
}

/// Fock-space annihilation operator on `|0>..|N_max>`.
pub fn fock_annihilation(fock_cutoff: usize) -> CMatrix {
    let d = fock_cutoff + 1;
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn build_operators(space: HilbertSpace) -> OperatorSet {
    let levels = space.qubit_levels;
    let fd = space.fock_dim();
    let id_q = CMatrix::identity(levels, levels);
    let id_f = CMatrix::identity(fd, fd);

    let a_f = fock_annihilation(space.fock_cutoff);
    let a = id_q.kronecker(&a_f);
    let a_dag = a.adjoint();

    let mut q_small = CMatrix::zeros(levels, levels);
    for k in 1..levels {
        q_small[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    let q = q_small.kronecker(&id_f);
    let q_dag = q.adjoint();

    let projectors = (0..levels)
        .map(|x| {
            let mut p = CMatrix::zeros(levels, levels);
            p[(x, x)] = C1;
            p.kronecker(&id_f)
        })
        .collect();

    OperatorSet {
        space,
        number: &a_dag * &a,
        a,
        a_dag,
        q,
        q_dag,
        identity: CMatrix::identity(space.dim(), space.dim()),
        projectors,
    }
}

/// Squeezing operator `S(r) = exp[r (a^2 - a_dag^2) / 2]` on the Fock factor.
pub fn squeeze(space: &HilbertSpace, r: f64) -> CMatrix {
    let a = fock_annihilation(space.fock_cutoff());
    let ad = a.adjoint();
    let gen = (&a * &a - &ad * &ad) * Complex64::new(r / 2.0, 0.0);
    matrix_exp(&gen).expect("square by construction")
}

/// Displacement operator `D(alpha) = exp[alpha a_dag - conj(alpha) a]` on the Fock factor.
pub fn displace(space: &HilbertSpace, alpha: Complex64) -> CMatrix {
    let a = fock_annihilation(space.fock_cutoff());
    let gen = a.adjoint() * alpha - &a * alpha.conj();
    matrix_exp(&gen).expect("square by construction")
}

/// Matrix exponential (Pade scaling-and-squaring).
pub fn matrix_exp(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().all(|z| *z == C0) {
        return Ok(CMatrix::identity(m.nrows(), m.ncols()));
    }
    Ok(m.clone().exp())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    m.is_square() && hermiticity_defect(m) < HERMITIAN_TOL
}

pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    if !ev.iter().all(|x| x.is_finite()) {
        // the complex QR sweeps occasionally return NaN for nearly pure states;
        // a unit shift keeps the near-zero eigenvalues away from underflow
        let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let shifted = &h + CMatrix::identity(h.nrows(), h.nrows()) * Complex64::new(scale, 0.0);
        ev = shifted.symmetric_eigenvalues().iter().map(|x| x - scale).collect();
        for rel in [0.0, 1e-40, 1e-30, 1e-20] {
            if ev.iter().all(|x| x.is_finite()) {
                break;
            }
            ev = embedded_eigenvalues(&h, rel * scale);
        }
    }
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of a Hermitian `A + iB` from the real embedding `[[A, -B], [B, A]]`,
/// where each appears twice; parts below `floor` are zeroed first.
fn embedded_eigenvalues(h: &CMatrix, floor: f64) -> Vec<f64> {
    let d = h.nrows();
    let flush = |x: f64| if x.abs() < floor { 0.0 } else { x };
    let real = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let z = h[(i % d, j % d)];
        match (i < d, j < d) {
            (true, false) => -flush(z.im),
            (false, true) => flush(z.im),
            _ => flush(z.re),
        }
    });
    let mut doubled: Vec<f64> = real.symmetric_eigenvalues().iter().copied().collect();
    doubled.sort_by(|a, b| a.total_cmp(b));
    doubled.into_iter().step_by(2).collect()
}

#[derive(Debug, Clone)]
pub enum QuantumState {
    Ket(CVector),
    Density(CMatrix),
}

pub const KET_NORM_TOL: f64 = 1e-10;
pub const DENSITY_TRACE_TOL: f64 = 1e-8;
pub const DENSITY_POSITIVITY_TOL: f64 = 1e-8;

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Ket(v) => v.len(),
            QuantumState::Density(m) => m.nrows(),
        }
    }

    /// Checks the normalization (ket) or trace/Hermiticity/positivity (density) invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            QuantumState::Ket(v) => {
                let n = v.norm();
                if (n - 1.0).abs() > KET_NORM_TOL {
                    return Err(Error::OutOfDomain {
                        name: "ket norm",
                        value: n,
                        domain: "1 +/- 1e-10",
                    });
                }
            }
            QuantumState::Density(m) => {
                if !m.is_square() {
                    return Err(Error::NotSquare {
                        rows: m.nrows(),
                        cols: m.ncols(),
                    });
                }
                let herm = hermiticity_defect(m);
                if herm > DENSITY_TRACE_TOL {
                    return Err(Error::OutOfDomain {
                        name: "density hermiticity defect",
                        value: herm,
                        domain: "< 1e-8",
                    });
                }
                let tr = trace(m).re;
                if (tr - 1.0).abs() > DENSITY_TRACE_TOL {
                    return Err(Error::OutOfDomain {
                        name: "density trace",
                        value: tr,
                        domain: "1 +/- 1e-8",
                    });
                }
                let min_ev = hermitian_eigenvalues(m)[0];
                if min_ev < -DENSITY_POSITIVITY_TOL {
                    return Err(Error::OutOfDomain {
                        name: "density min eigenvalue",
                        value: min_ev,
                        domain: ">= -1e-8",
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_density(&self) -> CMatrix {
        match self {
            QuantumState::Ket(v) => v * v.adjoint(),
            QuantumState::Density(m) => m.clone(),
        }
    }
}

pub fn expectation(op: &CMatrix, state: &QuantumState) -> Result<Complex64> {
    let d = state.dim();
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: op.nrows(),
        });
    }
    Ok(match state {
        QuantumState::Ket(v) => v.dotc(&(op * v)),
        // tr(O rho) without forming the product
        QuantumState::Density(rho) => {
            let mut acc = C0;
            for i in 0..d {
                for j in 0..d {
                    acc += op[(i, j)] * rho[(j, i)];
                }
            }
            acc
        }
    })
}

/// `<psi| rho |psi>` (or `|<psi|phi>|^2` for a ket state).
pub fn fidelity_pure(ket: &CVector, state: &QuantumState) -> Result<f64> {
    let d = state.dim();
    if ket.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: ket.len(),
        });
    }
    Ok(match state {
        QuantumState::Ket(v) => ket.dotc(v).norm_sqr(),
        QuantumState::Density(rho) => ket.dotc(&(rho * ket)).re,
    })
}
