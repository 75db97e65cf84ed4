//! Phase-matching quantum key distribution: protocol primitives, closed-form
//! channel models, a Monte-Carlo simulator of the optical rounds and a
//! finite-size decoy-state key analyzer.

pub mod channel;
pub mod cli;
pub mod error;
pub mod finite_key;
pub mod io;
pub mod protocol;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
