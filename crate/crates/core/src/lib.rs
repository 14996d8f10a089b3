//! Coherence/incoherence structure of stock markets seen through coupled phase oscillators.
//!
//! The pipeline turns daily prices into sliding-window coupling matrices, integrates an
//! identical-frequency Kuramoto–Sakaguchi system on each, detects the phase-locked group
//! per window and clusters stocks by how often they are locked.

pub mod clustering;
pub mod coherence;
pub mod error;
pub mod market_data;
pub mod oscillator_sim;
pub mod pipeline;

pub use error::{Error, ErrorClass, Result};
