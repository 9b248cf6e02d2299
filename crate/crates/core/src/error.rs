// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::quantities::Unit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot convert {from} to {to}: incompatible dimensions")]
    IncompatibleUnits { from: Unit, to: Unit },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "hydrogenic basis not converged at E_perp = {field_v_per_cm} V/cm: \
         level {level} moved by {shift:.3e} R between M and M+5 (limit {limit:.1e})"
    )]
    BasisNotConverged {
        field_v_per_cm: f64,
        level: usize,
        shift: f64,
        limit: f64,
    },

    #[error("potential is not binding at E_perp = {field_v_per_cm} V/cm: {reason}")]
    NotBinding { field_v_per_cm: f64, reason: String },

    #[error("finite-difference derivative did not converge: last two estimates {previous} and {last}")]
    DerivativeNotConverged { previous: f64, last: f64 },

    #[error("quadrature did not reach tolerance: error estimate {estimate:.3e} after {intervals} intervals")]
    QuadratureNotConverged { estimate: f64, intervals: usize },

    #[error(
        "integrator could not meet tolerance at t = {time:e} s: step {step:e} s at floor, \
         error estimate {estimate:.3e} (normalized)"
    )]
    StepSizeUnderflow { time: f64, step: f64, estimate: f64 },

    #[error("{what}: register of {qubits} qubits exceeds the limit of {limit}")]
    TooManyQubits {
        what: &'static str,
        qubits: usize,
        limit: usize,
    },

    #[error("malformed tunneling potential for level {level} at E_+ = {field_v_per_cm} V/cm: {reason}")]
    MalformedBarrier {
        level: usize,
        field_v_per_cm: f64,
        reason: String,
    },

    #[error(
        "no reverse field satisfies wait = {wait_s:e} s and selectivity {selectivity:e}: \
         best achievable selectivity is {best_selectivity:e} at E_+ = {best_field_v_per_cm} V/cm"
    )]
    NoReadoutWindow {
        wait_s: f64,
        selectivity: f64,
        best_selectivity: f64,
        best_field_v_per_cm: f64,
    },

    #[error("root finding failed: {0}")]
    RootNotFound(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
