//! Desk-scale rectified-flow lab: train a teacher flow on toy data, compress it
//! into a smaller straight 2-rectified flow with annealed reflow, and distill
//! that into a one-step generator with two-step Euler guidance.

mod binio;
pub mod cli;
pub mod config;
pub mod data_io;
pub mod distill;
pub mod error;
pub mod flow_train;
pub mod metrics;
pub mod nn;
pub mod schedules;
pub mod solvers;

pub use error::{Error, Result};
