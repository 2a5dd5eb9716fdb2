//! Small-signal synchronization stability of PLL-synchronized converter
//! networks.
//!
//! The usual entry point is [`pipeline::analyze`]: it solves the steady
//! state, Kron-reduces the network onto the converter terminals, tracks the
//! eigenvalue branches of the network frequency function, applies the
//! net-damping test at every spring crossing and decomposes the critical
//! eigenvalue into per-converter weights. [`oracle`] provides an independent
//! state-space model of the same loop.

pub mod config;
pub mod error;
pub mod frequency;
pub mod linalg;
pub mod modal;
pub mod network;
pub mod oracle;
pub mod pipeline;
pub mod powerflow;
pub mod report;
pub mod stability;

pub use config::{load_system_spec, parse_system_spec, validate, SystemSpec};
pub use error::{Error, Result};
pub use pipeline::{analyze, Analysis, AnalyzeOptions};
pub use stability::{StabilityReport, Verdict};
