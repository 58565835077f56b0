//! Disturbance-accommodation controller synthesis for networks of scalar
//! subsystems whose designers only see local model information.
//!
//! The plant is `x⁺ = A x + B (u + w)`, `w⁺ = D w` with `B`, `D` diagonal and
//! the sparsity of `A` fixed by a plant graph. Three controllers are built:
//!
//! * [`synthesis::centralized_optimal`], the full-information optimum obtained
//!   from a cheap-control Riccati equation on the augmented `(x, u + w)` system;
//! * [`synthesis::deadbeat`], which clears the state in two steps using only
//!   each subsystem's own row of the model;
//! * [`synthesis::theta`], deadbeat on non-sinks and a scalar-optimal gain on
//!   the sinks of the plant graph.
//!
//! [`evaluation`] computes closed-loop costs by simulation and in closed form,
//! and [`ratio`] compares strategies against the centralized optimum.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod graphs;
pub mod linalg;
pub mod plant;
pub mod ratio;
pub mod riccati;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
pub use evaluation::{CostReport, SimOptions};
pub use graphs::{DirectedGraph, SinkPartition};
pub use plant::{EnsembleSpec, Plant};
pub use riccati::{AugmentedSystem, DareSolution};
pub use synthesis::{Controller, Strategy};
