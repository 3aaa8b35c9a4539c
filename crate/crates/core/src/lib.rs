//! Exact-diagonalization laboratory for locally gapped quantum spin lattices.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod gaps;
pub mod interactions;
pub mod lattice;
pub mod liouvillian;
pub mod linalg;
pub mod models;
pub mod neass;
pub mod operators;
pub mod runner;
pub mod switching;
pub mod weight;

pub use error::{Error, Result};
