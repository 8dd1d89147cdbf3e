//! Determinantal point processes and beta-ensembles of weighted polynomial
//! sections on compact subsets of R^n, S^1 and S^2: Gram matrices and
//! Bergman functions, Fekete configurations, MCMC and exact DPP samplers,
//! and the metrics used to measure convergence to equilibrium.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod detcore;
pub mod domain;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod quadrature;
pub mod sampler;

pub use error::{Error, Result};
