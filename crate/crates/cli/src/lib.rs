//! The `chronos` pipeline: configuration, stage orchestration and artifact
//! files.

pub mod artifacts;
pub mod pipeline;
