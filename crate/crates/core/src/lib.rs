//! Ginzburg-Landau vortex dynamics for tangent vector fields on closed
//! oriented surfaces in R³.
//!
//! Layers, bottom up: [`geometry`] (meshes, analytic surfaces, exp/log maps),
//! [`dec`] (cochains, Hodge stars, Poisson and Hodge solves, harmonic forms),
//! [`fields`] (frames, connection, current, vorticity, energies),
//! [`renorm`] (canonical harmonic fields, renormalized energy and its
//! gradient, core energy), [`flow`] (the GL gradient flow and vortex tracking),
//! [`effective`] (the limiting vortex ODE) and [`harness`] (experiment configs
//! and CSV output for the command-line tool).

pub mod dec;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod renorm;
pub mod flow;
pub mod effective;
pub mod harness;

pub use error::{GlError, Result};
