//! Static feature detection: color moments, GLCM texture, Harris corners and
//! pairwise spatial relations between boxes.

mod color;
mod corners;
mod spatial;
mod texture;

pub use color::{color_moments, ChannelMoments, ColorMoments};
pub use corners::{harris_corners, harris_response, Corner, CornerSet, HarrisParams};
pub use spatial::{spatial_relations, PairRelation, SpatialDescriptor};
pub use texture::{
    glcm_texture, GlcmStats, TextureDescriptor, DEFAULT_GLCM_LEVELS, DEFAULT_GLCM_OFFSETS,
};

use thiserror::Error;

use crate::imaging::ImageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("region has no samples")]
    EmptyRegion,
    #[error("channel {channel} has {actual} samples, expected {expected}")]
    ChannelLength {
        channel: usize,
        expected: usize,
        actual: usize,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}
