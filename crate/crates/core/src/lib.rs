//! Prosodic feature deltas and similarity models for pairs of utterances.

pub mod audio;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod features;
pub mod importance;
pub mod models;
pub mod pipeline;
pub mod stats;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
