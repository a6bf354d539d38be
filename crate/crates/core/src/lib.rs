//! Adaptive mixed finite element solver for stationary incompressible flow in
//! the unit square with Darcy, Brinkman and Forchheimer resistance terms.
//!
//! The discretization uses Taylor-Hood Q2/Q1 elements on quadtree meshes with
//! hanging nodes, a Newton linearization, FGMRES with a block triangular
//! augmented-Lagrangian preconditioner, and Kelly-indicator driven adaptivity.

pub mod amr;
pub mod assembly;
pub mod discretization;
pub mod dofs;
pub mod elements;
pub mod error;
pub mod io;
pub mod mesh;
pub mod nonlinear;
pub mod problems;
pub mod saddle;
pub mod sparse;

pub use error::{Error, Result};
