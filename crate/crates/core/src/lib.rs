//! Simulator for clustered, label-agnostic federated learning of a dual-mode
//! intrusion detection model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod clustering;
pub mod data;
pub mod dm2a;
pub mod error;
pub mod fl;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
