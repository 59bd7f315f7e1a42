//! Distributed relative localization for robot swarms with range-only
//! sensing, plus a deterministic round-based simulator and an experiment
//! harness.
//!
//! Two localizers are provided: an uncoordinated one that solves a windowed
//! nonlinear system per neighbor ([`alg1`]), and a coordinated one that
//! trilaterates against stationary neighbors under an MIS-based motion
//! schedule ([`alg2`], [`scheduler`]). The [`engine`] owns ground truth and
//! noise; the [`harness`] reproduces the noise-sensitivity and flocking
//! studies from the command line.

pub mod alg1;
pub mod alg2;
pub mod engine;
pub mod geometry;
pub mod harness;
pub mod rng;
pub mod scheduler;
