//! Collapse simulation and guide-schedule planning for lamella gridshells.
//!
//! The pipeline collapses a deployed grid by releasing its anchors, traces
//! selected vertices, and linearizes the traced paths at shared knot times
//! into displacement schedules that an FEA deployment can follow.

// NaN must fail range checks, so negated comparisons are intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collapse;
pub mod dual;
pub mod error;
pub mod feasibility;
pub mod geometry;
pub mod io;
pub mod reparam;
pub mod rod;
pub mod samples;

pub use error::{Error, Result};
