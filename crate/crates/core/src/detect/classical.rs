use serde::{Deserialize, Serialize};

use super::{classify_region, DetectError, Detection, DetectorBackend, RuleTable};
use crate::features::{
    color_moments, glcm_texture, TextureDescriptor, DEFAULT_GLCM_LEVELS, DEFAULT_GLCM_OFFSETS,
};
use crate::imaging::{as_gray, crop, Frame};
use crate::motion::{
    binarize, extract_regions, foreground_mask, frame_difference, merge_nearby, BackgroundModel,
    BinaryMask, MotionConfig,
};

/// Where motion evidence comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionMode {
    /// Consecutive-frame differencing.
    #[default]
    Difference,
    /// Running-average background subtraction.
    Background,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalConfig {
    pub motion: MotionConfig,
    pub mode: MotionMode,
    /// Regions whose boxes are at most this many pixels apart are grouped.
    pub merge_gap: u32,
    /// Region area at which the size term of the confidence saturates.
    pub area_ref: f64,
    pub rules: RuleTable,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig {
            motion: MotionConfig::default(),
            mode: MotionMode::Difference,
            merge_gap: 3,
            area_ref: 64.0,
            rules: RuleTable::default(),
        }
    }
}

/// Motion segmentation followed by rule-based classification.
///
/// The first frame of a stream only primes the state and yields nothing.
#[derive(Debug, Clone)]
pub struct ClassicalDetector {
    cfg: ClassicalConfig,
    prev: Option<Frame>,
    background: BackgroundModel,
}

impl ClassicalDetector {
    pub fn new(cfg: ClassicalConfig) -> Result<Self, DetectError> {
        cfg.motion.validate()?;
        if cfg.area_ref.is_nan() || cfg.area_ref <= 0.0 {
            return Err(DetectError::Config(format!(
                "area_ref must be positive, got {}",
                cfg.area_ref
            )));
        }
        Ok(ClassicalDetector {
            cfg,
            prev: None,
            background: BackgroundModel::new(),
        })
    }

    pub fn config(&self) -> &ClassicalConfig {
        &self.cfg
    }

    /// Motion mask for `gray`, or `None` while priming.
    fn motion_mask(&mut self, gray: &Frame) -> Result<Option<BinaryMask>, DetectError> {
        let m = &self.cfg.motion;
        match self.cfg.mode {
            MotionMode::Difference => {
                let mask = match &self.prev {
                    Some(prev) => Some(binarize(&frame_difference(gray, prev)?, m.threshold)?),
                    None => None,
                };
                self.prev = Some(gray.clone());
                Ok(mask)
            }
            MotionMode::Background => {
                let mask = if self.background.is_initialized() {
                    Some(foreground_mask(&self.background, gray, m.bg_threshold)?)
                } else {
                    None
                };
                self.background.update(gray, m.bg_alpha)?;
                Ok(mask)
            }
        }
    }

    pub fn process(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        let gray = as_gray(frame);
        let Some(mask) = self.motion_mask(&gray)? else {
            return Ok(Vec::new());
        };
        let regions = extract_regions(&mask, &self.cfg.motion);
        let regions = merge_nearby(&regions, self.cfg.merge_gap);

        let mut out = Vec::with_capacity(regions.len());
        for region in &regions {
            let patch = crop(frame, &region.bbox).map_err(crate::features::FeatureError::from)?;
            let planes = patch.planes();
            let views: Vec<&[u8]> = planes.iter().map(Vec::as_slice).collect();
            let moments = color_moments(&views)?;
            let gray_patch =
                crop(&gray, &region.bbox).map_err(crate::features::FeatureError::from)?;
            // Slivers (1 px wide or tall) have no co-occurrence pairs.
            let texture = glcm_texture(&gray_patch, DEFAULT_GLCM_LEVELS, &DEFAULT_GLCM_OFFSETS)
                .unwrap_or_else(|_| TextureDescriptor::flat());
            let (label, confidence) = classify_region(
                region,
                &moments,
                &texture,
                &self.cfg.rules,
                self.cfg.area_ref,
            );
            out.push(Detection {
                bbox: region.bbox,
                label,
                confidence,
                source: "classical".to_string(),
            });
        }
        Ok(out)
    }
}

impl DetectorBackend for ClassicalDetector {
    fn name(&self) -> &str {
        "classical"
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        self.process(frame)
    }
}
