//! Geomasking of point data, anonymity metrics and re-identification attack
//! simulation.

pub mod attack;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod io;
pub mod masking;
pub mod metrics;
pub mod spatial_index;
pub mod synth;

pub use error::{Error, Result};
