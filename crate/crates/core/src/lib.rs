//! Floating-object detection for water-surface video.
//!
//! Frames come in through [`ingest`], motion is found by [`motion`], regions
//! are described by [`features`] and labelled and tracked by [`detect`].
//! [`service`] wires these into a threaded pipeline with an HTTP API,
//! [`synth`] renders seeded test scenes with ground truth and [`eval`]
//! scores detections against it.

pub mod detect;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod ingest;
pub mod motion;
pub mod service;
pub mod synth;
