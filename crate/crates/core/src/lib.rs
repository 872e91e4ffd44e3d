//! Staged vision-language inference for locating, timing and classifying
//! traffic accidents in dashcam and CCTV clips.

pub mod backend;
pub mod domain;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod overlay;
pub mod pipeline;
pub mod plan;
pub mod postprocess;
