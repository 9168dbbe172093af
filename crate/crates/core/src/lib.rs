//! Differential-privacy accounting for Langevin-type MCMC.
//!
//! The crate has two halves. The first computes closed-form privacy budgets
//! for the unadjusted Langevin algorithm (ULA) and stochastic-gradient
//! Langevin dynamics (SGLD). Final-draw bounds hold uniformly in the number
//! of iterations while path bounds grow with it. [`privacy`] adds the
//! transfer from chain convergence to privacy for generic Markov chains.
//!
//! The second half certifies those budgets empirically at desk scale:
//!
//! - [`samplers`] runs synchronously coupled chains on adjacent datasets and
//!   checks the almost-sure contraction of their gap.
//! - [`pathwise`] evaluates exact discrete likelihood ratios between the path
//!   laws of two chains and checks their tails and moments by Monte Carlo.
//! - [`oracle_verify`] provides brute-force checks on finite probability
//!   spaces and an exact Gaussian audit of the final-draw Rényi divergence.
//! - [`release`] implements the Laplace-noised ergodic-average release.
//!
//! Everything is seeded; a fixed `(config, seed)` reproduces results bit for
//! bit regardless of the number of worker threads.

pub mod accountant;
pub mod cli;
pub mod error;
pub mod oracle_verify;
pub mod pathwise;
pub mod privacy;
pub mod release;
pub mod rng;
pub mod samplers;
pub mod stats;

pub use error::{Error, Result};
pub use privacy::{ConvergenceProfile, PrivacyBudget, RenyiBudget};
