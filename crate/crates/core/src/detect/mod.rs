//! Detection stage: the backend contract, the built-in classical detector,
//! region classification and track/event management.

mod classical;
pub mod rules;
mod tracker;

pub use classical::{ClassicalConfig, ClassicalDetector, MotionMode};
pub use rules::{Predicate, RegionFeatures, Rule, RuleSpec, RuleTable};
pub use tracker::{check_event_grammar, Track, Tracker, TrackerConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ColorMoments, FeatureError, TextureDescriptor};
use crate::imaging::{BoundingBox, Frame};
use crate::motion::{MotionError, MovingRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Vessel,
    Vegetation,
    Debris,
    Unknown,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Vessel,
        Label::Vegetation,
        Label::Debris,
        Label::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Vessel => "vessel",
            Label::Vegetation => "vegetation",
            Label::Debris => "debris",
            Label::Unknown => "unknown",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub label: Label,
    pub confidence: f64,
    /// Backend that produced it, e.g. `classical` or `external`.
    pub source: String,
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend protocol violation: {0}")]
    BackendProtocol(String),
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Anything that turns frames into detections.
///
/// Implementations must be deterministic for a fixed internal state and
/// input frame, and must only report boxes that fit inside the frame.
pub trait DetectorBackend: Send {
    fn name(&self) -> &str;

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectError>;
}

impl<B: DetectorBackend + ?Sized> DetectorBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        (**self).detect(frame)
    }
}

/// Runs `backend` and enforces the output contract (boxes in bounds,
/// confidences in [0, 1]).
pub fn backend_detect<B: DetectorBackend + ?Sized>(
    backend: &mut B,
    frame: &Frame,
) -> Result<Vec<Detection>, DetectError> {
    let dets = backend.detect(frame)?;
    validate_detections(&dets, frame.dims())?;
    Ok(dets)
}

pub fn validate_detections(dets: &[Detection], dims: (u32, u32)) -> Result<(), DetectError> {
    for d in dets {
        if !d.bbox.fits(dims.0, dims.1) {
            return Err(DetectError::BackendProtocol(format!(
                "box {} exceeds {}x{} frame",
                d.bbox, dims.0, dims.1
            )));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(DetectError::BackendProtocol(format!(
                "confidence {} outside [0, 1]",
                d.confidence
            )));
        }
    }
    Ok(())
}

/// Labels a region with the first matching rule.
///
/// A match scores `clamp((0.5 + 0.5 * min(1, area / area_ref)) * weight, 0, 1)`;
/// no match gives `unknown` with `0.5 * min(1, area / area_ref)`.
pub fn classify_region(
    region: &MovingRegion,
    moments: &ColorMoments,
    texture: &TextureDescriptor,
    rules: &RuleTable,
    area_ref: f64,
) -> (Label, f64) {
    let features = RegionFeatures {
        area: region.area,
        box_area: region.bbox.area(),
        moments: moments.clone(),
        texture: texture.mean(),
    };
    classify_features(&features, rules, area_ref)
}

pub fn classify_features(
    features: &RegionFeatures,
    rules: &RuleTable,
    area_ref: f64,
) -> (Label, f64) {
    let size = (features.area as f64 / area_ref).min(1.0);
    match rules.first_match(features) {
        Some(i) => {
            let rule = &rules.rules[i];
            (
                rule.label,
                ((0.5 + 0.5 * size) * rule.weight).clamp(0.0, 1.0),
            )
        }
        None => (Label::Unknown, 0.5 * size),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Appeared,
    Updated,
    Exited,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub kind: EventKind,
    pub track_id: u64,
    pub seq: u64,
    pub timestamp_us: u64,
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub label: Label,
    pub confidence: f64,
}
