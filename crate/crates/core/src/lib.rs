//! Procedural fairness auditing for tabular classifiers.
//!
//! The crate measures how stable model explanations (KernelSHAP, LIME and
//! their average) are under input perturbation, compares that stability
//! across sensitive groups (GESD), and searches model configurations for a
//! trade-off between outcome fairness, explanation-stability fairness and
//! utility with NSGA-II.

pub mod config;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod explainers;
pub mod metrics;
pub mod models;
pub mod moea;
pub mod seed;
pub mod selection;
pub mod stability;
pub mod svg;

pub use error::{ErrorKind, GesdError, Result};
