#![no_std]
//! Core model for branching random walks in an i.i.d. time-random environment on a lattice.
//!
//! Everything here is allocation-only (`alloc`), deterministic, and free of IO.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conditioned;
pub mod criterion;
pub mod env;
pub mod error;
pub mod harmonic;
pub mod lattice;
pub mod population;
pub mod renewal;
pub mod rng;
pub mod special;
pub mod spine;
pub mod tanaka;
pub mod walk;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
