use super::{check_dims, check_threshold, BinaryMask, MotionError};
use crate::imaging::Frame;

/// Per-pixel exponential running average of a gray stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackgroundModel {
    width: u32,
    height: u32,
    mean: Vec<f64>,
    frames_seen: u64,
}

impl BackgroundModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_initialized(&self) -> bool {
        self.frames_seen > 0
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// `mean <- mean + alpha * (frame - mean)`; the first frame initializes
    /// the mean exactly.
    pub fn update(&mut self, frame: &Frame, alpha: f64) -> Result<(), MotionError> {
        frame.require_gray()?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MotionError::InvalidParameter(format!(
                "alpha must be in (0, 1], got {alpha}"
            )));
        }
        if !self.is_initialized() {
            self.width = frame.width();
            self.height = frame.height();
            self.mean = frame.data().iter().map(|&v| v as f64).collect();
        } else {
            check_dims(self.dims(), frame.dims())?;
            for (m, &v) in self.mean.iter_mut().zip(frame.data()) {
                *m += alpha * (v as f64 - *m);
            }
        }
        self.frames_seen += 1;
        Ok(())
    }
}

pub fn update_background(
    mut model: BackgroundModel,
    frame: &Frame,
    alpha: f64,
) -> Result<BackgroundModel, MotionError> {
    model.update(frame, alpha)?;
    Ok(model)
}

/// 255 where `|frame - round(mean)| > threshold`.
pub fn foreground_mask(
    model: &BackgroundModel,
    frame: &Frame,
    threshold: u8,
) -> Result<BinaryMask, MotionError> {
    if !model.is_initialized() {
        return Err(MotionError::UninitializedModel);
    }
    frame.require_gray()?;
    check_threshold(threshold)?;
    check_dims(model.dims(), frame.dims())?;
    let values = frame
        .data()
        .iter()
        .zip(&model.mean)
        .map(|(&v, &m)| {
            let bg = m.round() as u8;
            if v.abs_diff(bg) > threshold {
                255
            } else {
                0
            }
        })
        .collect();
    Ok(BinaryMask::from_raw(frame.width(), frame.height(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: u8) -> Frame {
        Frame::from_fn_gray(4, 3, |_, _| v).unwrap()
    }

    #[test]
    fn first_frame_initializes() {
        let f = Frame::from_fn_gray(4, 3, |x, y| (x * 10 + y) as u8).unwrap();
        let m = update_background(BackgroundModel::new(), &f, 0.05).unwrap();
        assert_eq!(m.frames_seen(), 1);
        assert!(m.mean().iter().zip(f.data()).all(|(&a, &b)| a == b as f64));
    }

    #[test]
    fn constant_stream_is_fixed_point() {
        let mut m = BackgroundModel::new();
        for _ in 0..20 {
            m.update(&flat(73), 0.05).unwrap();
        }
        assert!(m.mean().iter().all(|&v| v == 73.0));
    }

    #[test]
    fn single_step_arithmetic() {
        let mut m = BackgroundModel::new();
        m.update(&flat(100), 0.05).unwrap();
        m.update(&flat(200), 0.05).unwrap();
        assert!(m.mean().iter().all(|&v| v == 105.0));
    }

    #[test]
    fn foreground_cases() {
        let mut m = BackgroundModel::new();
        assert_eq!(
            foreground_mask(&m, &flat(1), 25),
            Err(MotionError::UninitializedModel)
        );
        m.update(&flat(100), 0.05).unwrap();
        assert_eq!(foreground_mask(&m, &flat(100), 25).unwrap().count_set(), 0);
        assert_eq!(foreground_mask(&m, &flat(125), 25).unwrap().count_set(), 0);
        assert_eq!(foreground_mask(&m, &flat(126), 25).unwrap().count_set(), 12);
        let other = Frame::from_fn_gray(3, 3, |_, _| 0).unwrap();
        assert!(matches!(
            m.update(&other, 0.05),
            Err(MotionError::DimensionMismatch { .. })
        ));
    }
}
