//! Numerical laboratory for arithmetic three-spheres inequalities.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`] holds the structural constants of the equation class and the
//!   evaluable operators `A` and `B` of `-div A(x,u,∇u) + B(x,u,∇u) = 0`.
//! * [`bounds`] evaluates every closed-form convexity parameter and the
//!   condenser p-capacity.
//! * [`radial`] manufactures exact and numerical radial solutions.
//! * [`fdm2d`] solves the regularised problem on planar disks and annuli.
//! * [`ballstats`] turns solutions into ball maxima/minima profiles.
//! * [`verify`] checks the inequalities, calibrates constants and evaluates
//!   the Liouville step.
//! * [`experiment`] runs JSON-configured batches and emits reports.

pub mod ballstats;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod fdm2d;
pub mod params;
pub mod radial;
pub mod verify;

pub use error::{Error, Result};
