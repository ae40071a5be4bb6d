//! Simulation and analysis engine for criticality-enhanced sensing with the
//! driven Jaynes-Cummings model.
//!
//! Units: times in microseconds, every Hamiltonian frequency and every decay
//! rate in 1/us (angular frequencies are rad/us).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod calibration;
pub mod error;
pub mod io;
pub mod lindblad;
pub mod protocols;
pub mod quantum;
pub mod readout;

pub use error::{Error, Result};
