//! Deep backward dynamic programming (DBDP) for high-dimensional nonlinear
//! parabolic PDEs, with interchangeable Monte Carlo and randomized
//! quasi-Monte Carlo (scrambled Sobol') sampling of the training batches.
//!
//! The crate is organised bottom-up:
//!
//! * [`lowdisc`] produces uniform and Gaussian sample batches (plain MC and
//!   Owen-scrambled Sobol' points) plus the inverse normal CDF.
//! * [`net`] holds the tanh multilayer perceptrons, their hand-written
//!   backward pass, batch normalization and the AdamW optimizer.
//! * [`problems`] defines the benchmark PDEs, their exact path simulation
//!   and reference solutions.
//! * [`dbdp`] is the backward training loop.
//! * [`eval`] measures relative L2 errors, histograms and quadrature rates.
//! * [`config`] and [`cli`] drive everything from a configuration file.

pub mod cli;
pub mod config;
pub mod dbdp;
pub mod error;
pub mod eval;
pub mod lowdisc;
pub mod net;
pub mod problems;
pub mod seed;

pub use error::{Error, Result};
