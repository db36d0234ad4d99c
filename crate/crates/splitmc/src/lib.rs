//! Operator-splitting schemes (Lie, Strang) for continuous-time Markov
//! chains, with relative-entropy-rate (RER) diagnostics.
//!
//! The crate has three layers:
//! - `model`: states, Arrhenius spin-flip rates, dense generators and
//!   restrictions, splitting-scheme descriptors;
//! - `analysis`: a dense-matrix ground-truth engine (semigroups, exact
//!   RER, commutators, connectivity, order fits, UQ bounds) for small
//!   state spaces;
//! - `kmc` + `estimator`: an exact lattice SSA with checkerboard
//!   parallel splitting schedules and online estimators of the leading
//!   RER coefficients, validated against the dense engine.
//!
//! The `splitmc` binary (see `cli`) exposes the whole pipeline behind
//! `analyze-chain`, `simulate`, `sweep`, and `compare` subcommands.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod estimator;
pub mod kmc;
pub mod matrix;
pub mod model;
pub mod report;
