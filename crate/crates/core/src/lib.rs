//! Federated per-packet intrusion detection workbench.
//!
//! The pipeline runs capture files through [`packet`] extraction, labels and
//! samples them in [`dataset`], scales and splits in [`preprocess`], and
//! trains the small [`nn`] classifier across simulated clients in
//! [`federation`]. [`attack`] poisons one client's labels, [`metrics`] scores
//! the results and [`experiment`] drives repeated, reproducible runs.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod packet;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
