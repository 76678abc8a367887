//! Privacy-preserving fall detection on thermal video.
//!
//! The pipeline tracks the person in each frame (detector boxes fused with
//! contour boxes and a constant-velocity Kalman tracker), crops and
//! normalizes region-of-interest windows, computes dense optical flow, and
//! trains two-channel 3D convolutional autoencoders adversarially on normal
//! activity only. Falls surface as reconstruction-error anomalies, scored per
//! frame and per window and evaluated by ROC/PR AUC.
//!
//! The crate is a library first; see `examples/` for one runnable program per
//! capability and `src/main.rs` for the thin stage-pipeline binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod pipeline;
pub mod roi;
pub mod stages;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
