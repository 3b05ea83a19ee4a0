//! Numerical laboratory for gravity-related wave-function collapse.
//!
//! The crate simulates rigid homogeneous balls whose quantum state is driven
//! by a Newtonian-kernel collapse noise:
//!
//! * [`probe`]: units, ball parameters and derived scales,
//! * [`noise`]: reproducible force and lattice-field noise,
//! * [`pointer`]: Gaussian and grid solvers of the reduced collapse equation,
//! * [`jumps`]: the piecewise-deterministic (jump) unraveling,
//! * [`trajectories`]: centroid SDEs and their exact moments,
//! * [`decoherence`]: mass-density distance, decoherence rates, two-branch
//!   superpositions,
//! * [`emergent`]: the observable-field pair force between two balls,
//! * [`pressure`]: kinetic Monte Carlo of a ball in a thin gas,
//! * [`checks`]: executable acceptance criteria shared by tests and the CLI.

// `!(x >= y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod decoherence;
pub mod emergent;
pub mod ensemble;
mod error;
pub mod jumps;
pub mod noise;
pub mod pointer;
pub mod pressure;
pub mod probe;
pub mod quadrature;
pub mod stats;
pub mod trajectories;

pub use error::{Error, Result};
pub use probe::{characteristic_scales, make_probe_params, ProbeParams, ScaleReport, UnitSystem};

pub type Vec3 = nalgebra::Vector3<f64>;

/// The guide's chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/probes.md")]
    mod probes {}
    #[doc = include_str!("../../../book/src/pointer.md")]
    mod pointer {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/jumps.md")]
    mod jumps {}
    #[doc = include_str!("../../../book/src/decoherence.md")]
    mod decoherence {}
    #[doc = include_str!("../../../book/src/emergent.md")]
    mod emergent {}
    #[doc = include_str!("../../../book/src/pressure.md")]
    mod pressure {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
