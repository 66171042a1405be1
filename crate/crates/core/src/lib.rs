#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(unused_imports))]
//! Simulation core for continuous QND readout of nanoresonator Fock states
//! through a feedback-controlled qubit/cavity chain.
//!
//! Everything here is allocation-backed but IO-free; file formats, the CLI and
//! parallel orchestration live in the `qnd-sim` crate.

extern crate alloc;

pub mod layout;
pub mod analysis;
pub mod engine;
pub mod model;
pub mod operator;
pub mod state;
pub mod superop;

pub use layout::SpaceLayout;
pub use operator::{annihilation_op, number_op, pauli_ops, tensor, Operator, OperatorError, Pauli};
pub use state::{expectation, thermal_state, DensityMatrix};
pub use superop::{dissipator, meas_superop};
