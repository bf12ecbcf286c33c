//! Synthetic minority-sequence generation with a multimodal recurrent VAE,
//! frame-level intent detectors over pose+emotion feature streams, and the
//! evaluation protocol that ties them together.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod detectors;
pub mod eval;
pub mod mintrvae;
pub mod nn;
pub mod pipeline;
pub mod numerics;
