//! Simulation and fitting of ultrafast spin rotations driven by single
//! far-detuned optical pulses in Λ-type three-level systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] — small dense complex matrices, states and fidelity.
//! * [`model`] — Hamiltonians, pulse envelopes, Rabi calibration, the
//!   effective two-level reduction and the relaxation super-operator.
//! * [`lindblad`] — RK4 integration of the master equation.
//! * [`sequence`] — declarative experiment sequences and observables.
//! * [`fit`] — simplex fitting of the dephasing model to sweep data.
//!
//! Internal units are picoseconds and rad/ps; see [`units`].

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod sequence;
pub mod units;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, DensityMatrix, StateVector};
pub use model::{
    DephasingModel, LambdaSystem, PulseSpec, RabiCalibration, RabiPair, RelaxationParams,
};
