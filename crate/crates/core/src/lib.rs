//! Numerical core for non-Markovian collapse models and their Bohmian bath
//! reformulation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation on in-memory values; file formats, configuration and the
//! command line live in the `collapsar` crate.
//!
//! Module map:
//!
//! * [`quantum`]: dense complex operators, states, matrix exponentials,
//!   partial traces.
//! * [`kernel`]: stationary noise kernels and their oscillator-mode
//!   factorization.
//! * [`noise`]: Born-rule hidden variables, the hidden-variable to noise map,
//!   dense Gaussian sampling and covariance estimation.
//! * [`markov`]: white-noise collapse (Itô) trajectories and the Lindblad
//!   oracle.
//! * [`nonmarkov`]: the linear colored-noise equation, functional-derivative
//!   checks, noise redefinition and normalized trajectories.
//! * [`bath`]: joint system and bath evolution, conditional wave functions and
//!   guided hidden variables.
//! * [`oracle`]: density-matrix propagation of the influence-functional map and
//!   closed-form dephasing.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bath;
pub mod error;
pub mod kernel;
pub mod markov;
pub mod noise;
pub mod nonmarkov;
pub mod oracle;
pub mod quantum;
pub mod rng;
pub mod stats;

mod ensemble;
mod grid;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use num_complex::Complex64 as C64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
