//! Geometry-based stochastic channel model.
//!
//! The pipeline for one drop runs layout, UT drop and link assignment
//! ([`scenario`]), correlated large-scale parameters ([`lsp`]), clusters and
//! rays ([`smallscale`]), polarization ([`polarization`]), antennas
//! ([`antenna`]), optional near-field and non-stationarity corrections
//! ([`nearfield`], [`sns`]) and finally coefficient assembly ([`coeffgen`]).
//! [`harness`] drives whole runs and checks realized statistics.

pub mod antenna;
pub mod coeffgen;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lsp;
pub mod nearfield;
pub mod polarization;
pub mod rng;
pub mod scenario;
pub mod smallscale;
pub mod sns;
pub mod tables;

pub use error::{GscmError, Result};
pub use rng::{ModuleTag, Stream, StreamKey};
