//! Lattice Gaussian free fields conditioned to avoid a set at every site.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command-line
//! driver and parallel orchestration live in the companion `gff-lab` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose to reject NaN; index loops walk parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod capacity;
pub mod conditioner;
mod error;
pub mod gaussian;
pub mod ising;
pub mod lattice;
pub mod linalg;
pub mod math;
pub mod observables;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod uniqueness;

pub use error::{Error, Result};
