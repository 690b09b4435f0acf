use super::{check_dims, check_threshold, MotionError};
use crate::imaging::Frame;

/// Per-pixel absolute difference of two gray frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u8>,
}

/// Per-pixel motion flag, each value 0 or 255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl BinaryMask {
    /// Fails unless every value is 0 or 255 and the length matches.
    pub fn new(width: u32, height: u32, values: Vec<u8>) -> Result<Self, MotionError> {
        if values.len() != width as usize * height as usize {
            return Err(MotionError::InvalidParameter(format!(
                "mask of {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if values.iter().any(|&v| v != 0 && v != 255) {
            return Err(MotionError::InvalidParameter(
                "mask values must be 0 or 255".into(),
            ));
        }
        Ok(BinaryMask {
            width,
            height,
            values,
        })
    }

    pub(crate) fn from_raw(width: u32, height: u32, values: Vec<u8>) -> Self {
        debug_assert!(values.iter().all(|&v| v == 0 || v == 255));
        BinaryMask {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.values[y as usize * self.width as usize + x as usize] == 255
    }

    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|&&v| v == 255).count()
    }
}

pub fn frame_difference(cur: &Frame, prev: &Frame) -> Result<DiffMap, MotionError> {
    cur.require_gray()?;
    prev.require_gray()?;
    check_dims(prev.dims(), cur.dims())?;
    if prev.seq() >= cur.seq() {
        return Err(MotionError::SequenceOrder {
            prev: prev.seq(),
            cur: cur.seq(),
        });
    }
    let values = cur
        .data()
        .iter()
        .zip(prev.data())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    Ok(DiffMap {
        width: cur.width(),
        height: cur.height(),
        values,
    })
}

/// 255 where the difference is strictly greater than `threshold`, else 0.
pub fn binarize(diff: &DiffMap, threshold: u8) -> Result<BinaryMask, MotionError> {
    check_threshold(threshold)?;
    let values = diff
        .values
        .iter()
        .map(|&d| if d > threshold { 255 } else { 0 })
        .collect();
    Ok(BinaryMask::from_raw(diff.width, diff.height, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, v: Vec<u8>, seq: u64) -> Frame {
        Frame::gray(w, h, v).unwrap().with_timing(seq, 0)
    }

    #[test]
    fn self_difference_is_zero() {
        let a = gray(3, 2, vec![1, 2, 3, 4, 5, 6], 0);
        let b = gray(3, 2, vec![1, 2, 3, 4, 5, 6], 1);
        assert!(frame_difference(&b, &a)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn single_pixel_change() {
        let a = gray(2, 2, vec![100; 4], 0);
        let b = gray(2, 2, vec![100, 160, 100, 100], 1);
        assert_eq!(frame_difference(&b, &a).unwrap().values, vec![0, 60, 0, 0]);
    }

    #[test]
    fn difference_errors() {
        let a = gray(2, 2, vec![0; 4], 5);
        let b = gray(2, 2, vec![0; 4], 5);
        assert!(matches!(
            frame_difference(&b, &a),
            Err(MotionError::SequenceOrder { .. })
        ));
        let c = gray(1, 4, vec![0; 4], 6);
        assert!(matches!(
            frame_difference(&c, &a),
            Err(MotionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn binarize_boundary_is_strict() {
        let d = DiffMap {
            width: 3,
            height: 1,
            values: vec![25, 26, 0],
        };
        assert_eq!(binarize(&d, 25).unwrap().values(), &[0, 255, 0]);
        assert_eq!(binarize(&d, 0), Err(MotionError::BadThreshold(0)));
        assert_eq!(binarize(&d, 255), Err(MotionError::BadThreshold(255)));
    }

    #[test]
    fn mask_validation() {
        assert!(BinaryMask::new(2, 1, vec![0, 255]).is_ok());
        assert!(BinaryMask::new(2, 1, vec![0, 1]).is_err());
        assert!(BinaryMask::new(2, 2, vec![0, 255]).is_err());
    }
}
