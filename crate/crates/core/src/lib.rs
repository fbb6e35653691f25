//! Simulation core for bit-commitment-based quantum oblivious transfer.
//!
//! The crate is `no_std` (with `alloc`). It contains the dense linear algebra,
//! the branched-product register state, an ideal commitment vault, the
//! honest protocol parties, the entangling adversary and the switch-unitary
//! analysis of ideal one-sided computations.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversary;
pub mod error;
pub mod linalg;
pub mod lo;
pub mod protocol;
pub mod reference;
pub mod registers;
pub mod seeding;
pub mod stats;
pub mod vault;

pub use error::{Error, Result};
