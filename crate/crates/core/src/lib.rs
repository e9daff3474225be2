//! Discontinuous Galerkin solver for the compressible Navier-Stokes equations
//! in a sudden-expansion channel, together with non-intrusive POD reduced-order
//! models (RBF interpolation and a small feed-forward network) that predict the
//! symmetry-breaking bifurcation of the jet.

pub mod container;
pub mod config;
pub mod dg;
pub mod error;
pub mod mesh;
pub mod physics;
pub mod pod;
pub mod regress;
pub mod rom;
pub mod snapshots;
pub mod solver;
pub mod workflow;

pub use error::{Error, Result};
