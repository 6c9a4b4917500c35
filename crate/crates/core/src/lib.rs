//! Motion-blur benchmarking for visual place recognition.
//!
//! The crate covers the whole offline workflow: synthesizing motion blur by
//! averaging consecutive frames of a high frame-rate sequence, organizing the
//! result into traverses and query/reference pairs, describing places, scoring
//! retrieval with precision-recall AUC, and running adaptive deblurring
//! pipelines gated by a Laplacian-variance blur detector.

pub mod adaptive;
pub mod blur_detect;
pub mod blur_synth;
pub mod dataset;
pub mod descriptors;
mod error;
pub mod evaluation;
pub mod imaging;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
