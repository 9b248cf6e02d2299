// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Device physics and pulse-level simulation for qubits made from electrons
//! floating on liquid helium.
//!
//! The qubit is the pair of lowest hydrogenic levels of an electron's vertical
//! motion. The crate derives qubit parameters from device geometry
//! ([`hydrogenic`], [`helium_medium`], [`qubit_model`]), evaluates the
//! decoherence budget ([`decoherence`]), evolves the driven register
//! ([`pulse_control`], [`dynamics`]) and simulates state-selective tunneling
//! readout ([`readout`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoherence;
pub mod dynamics;
pub mod error;
pub mod helium_medium;
pub mod hydrogenic;
pub mod pulse_control;
pub mod quadrature;
pub mod quantities;
pub mod qubit_model;
pub mod readout;
pub mod serialization;

pub use error::{Error, Result};
