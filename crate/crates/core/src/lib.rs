//! Numerical laboratory for diagonal flows on the space of unimodular
//! lattices.

pub mod error;
pub mod exact;
pub mod flow;
pub mod lattice;
pub mod poly;
pub mod rng;
pub mod stats;
pub mod dirichlet;
pub mod bestapprox;
pub mod algapprox;
pub mod kmtree;
pub mod stochastic;

pub use error::{LabError, Result};
