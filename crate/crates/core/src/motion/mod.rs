//! Dynamic feature detection: two-frame differencing, thresholding, moving
//! region extraction, running-average background subtraction and coarse
//! block-matching motion.

mod background;
mod block;
mod diff;
mod regions;

pub use background::{foreground_mask, update_background, BackgroundModel};
pub use block::{block_motion, MotionField};
pub use diff::{binarize, frame_difference, BinaryMask, DiffMap};
pub use regions::{extract_regions, merge_nearby, Connectivity, MovingRegion};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("dimension mismatch: {expected:?} vs {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("previous frame seq {prev} is not older than current seq {cur}")]
    SequenceOrder { prev: u64, cur: u64 },
    #[error("threshold {0} outside the open range (0, 255)")]
    BadThreshold(u8),
    #[error("background model has not seen a frame yet")]
    UninitializedModel,
    #[error("invalid motion parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Motion-stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    /// Binarization threshold for frame differences.
    pub threshold: u8,
    /// Components smaller than this many pixels are discarded.
    pub min_area: u32,
    pub connectivity: Connectivity,
    /// Background learning rate.
    pub bg_alpha: f64,
    /// Foreground threshold against the background mean.
    pub bg_threshold: u8,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            threshold: 25,
            min_area: 12,
            connectivity: Connectivity::Eight,
            bg_alpha: 0.05,
            bg_threshold: 25,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        check_threshold(self.threshold)?;
        check_threshold(self.bg_threshold)?;
        if self.min_area < 1 {
            return Err(MotionError::InvalidParameter(
                "min_area must be >= 1".into(),
            ));
        }
        if !(self.bg_alpha > 0.0 && self.bg_alpha <= 1.0) {
            return Err(MotionError::InvalidParameter(format!(
                "bg_alpha must be in (0, 1], got {}",
                self.bg_alpha
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_threshold(t: u8) -> Result<(), MotionError> {
    if t == 0 || t == 255 {
        return Err(MotionError::BadThreshold(t));
    }
    Ok(())
}

pub(crate) fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<(), MotionError> {
    if a != b {
        return Err(MotionError::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}
