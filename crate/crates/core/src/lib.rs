//! Numerical laboratory for non-local quantum computation on ring lattices.

pub mod approxcode;
pub mod decompose;
pub mod error;
pub mod holocode;
pub mod lattice;
pub mod protocol;
pub mod qcore;
pub mod spread;
pub mod stab;
pub mod teleport;

pub use error::{Error, Result};
