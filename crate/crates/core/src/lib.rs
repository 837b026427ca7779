//! Hopf bifurcation margins of a droop-controlled grid-forming inverter
//! connected to an infinite bus through a static or dynamic line.
//!
//! The crate locates Hopf points along one-parameter scans, evaluates the
//! normal vector of the Hopf hypersurface in parameter space, and turns it
//! into first-order margin sensitivities for controllable parameters.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod equilibrium;
pub mod hopf;
pub mod model;
pub mod normal;
pub mod report;
pub mod simulate;
