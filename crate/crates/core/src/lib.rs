//! Simulation and analysis of quantum-dot emitters routed through a
//! thermally tuned add-drop ring filter.

// `!(x > 0.0)` is used deliberately so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod cli;
pub mod config;
pub mod emitter;
pub mod error;
pub mod fit;
pub mod io;
pub mod ring;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};
