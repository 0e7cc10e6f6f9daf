//! Experiment plumbing: datasets, file formats, configuration, the derivative
//! checks and the end-to-end defense-efficacy experiment.

pub mod config;
pub mod data;
pub mod dump;
pub mod experiment;
pub mod idx;
pub mod pgm;
pub mod verify;
