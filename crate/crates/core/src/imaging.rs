//! Raster types, color conversion and box geometry shared by every stage.
//!
//! Samples are 8-bit and stored row-major with channels interleaved. Anything
//! that needs more precision (moments, background means) promotes to `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("frame dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("sample buffer holds {actual} bytes, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("channel mismatch: expected {expected} channel(s), got {actual}")]
    ChannelMismatch { expected: u8, actual: u8 },
    #[error("box {bbox} does not fit inside a {width}x{height} frame")]
    OutOfBounds {
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    #[error("box extent must be at least 1x1")]
    EmptyBox,
}

/// Sample layout of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PixelFormat {
    Gray,
    Rgb,
}

impl PixelFormat {
    pub fn channels(self) -> u8 {
        match self {
            PixelFormat::Gray => 1,
            PixelFormat::Rgb => 3,
        }
    }

    pub fn from_channels(channels: u32) -> Option<Self> {
        match channels {
            1 => Some(PixelFormat::Gray),
            3 => Some(PixelFormat::Rgb),
            _ => None,
        }
    }
}

/// A timestamped raster. Immutable once built; share it with `Arc<Frame>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    format: PixelFormat,
    timestamp_us: u64,
    seq: u64,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(
        width: u32,
        height: u32,
        format: PixelFormat,
        data: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        let expected = sample_count(width, height, format);
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            format,
            timestamp_us: 0,
            seq: 0,
            data,
        })
    }

    pub fn gray(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        Frame::new(width, height, PixelFormat::Gray, data)
    }

    pub fn rgb(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        Frame::new(width, height, PixelFormat::Rgb, data)
    }

    /// A frame with every sample set to `value`.
    pub fn filled(
        width: u32,
        height: u32,
        format: PixelFormat,
        value: u8,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        let data = vec![value; sample_count(width, height, format)];
        Frame::new(width, height, format, data)
    }

    /// Builds a gray frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn_gray(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> u8,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame::gray(width, height, data)
    }

    pub fn with_timing(mut self, seq: u64, timestamp_us: u64) -> Self {
        self.seq = seq;
        self.timestamp_us = timestamp_us;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn channels(&self) -> u8 {
        self.format.channels()
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox {
            x: 0,
            y: 0,
            w: self.width,
            h: self.height,
        }
    }

    /// All channel samples of pixel `(x, y)`.
    ///
    /// Panics if the coordinate lies outside the frame.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x},{y}) out of range"
        );
        let c = self.channels() as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// Splits the interleaved samples into one plane per channel.
    pub fn planes(&self) -> Vec<Vec<u8>> {
        let c = self.channels() as usize;
        (0..c)
            .map(|ch| self.data.iter().skip(ch).step_by(c).copied().collect())
            .collect()
    }

    // Same geometry and timing, no samples.
    fn header(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            format: self.format,
            timestamp_us: self.timestamp_us,
            seq: self.seq,
            data: Vec::new(),
        }
    }

    fn require_channels(&self, expected: PixelFormat) -> Result<(), ImageError> {
        if self.format != expected {
            return Err(ImageError::ChannelMismatch {
                expected: expected.channels(),
                actual: self.channels(),
            });
        }
        Ok(())
    }

    /// Fails with `ChannelMismatch` unless this is a 1-channel frame.
    pub fn require_gray(&self) -> Result<(), ImageError> {
        self.require_channels(PixelFormat::Gray)
    }
}

fn sample_count(width: u32, height: u32, format: PixelFormat) -> usize {
    width as usize * height as usize * format.channels() as usize
}

/// BT.601 luma of one RGB sample, rounded half up.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    // Integer weights keep the rounding exact: 299 + 587 + 114 = 1000.
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

pub fn to_grayscale(frame: &Frame) -> Result<Frame, ImageError> {
    frame.require_channels(PixelFormat::Rgb)?;
    let data = frame
        .data
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    Ok(Frame {
        format: PixelFormat::Gray,
        data,
        ..frame.header()
    })
}

/// Converts to gray when needed, borrowing otherwise.
pub fn as_gray(frame: &Frame) -> std::borrow::Cow<'_, Frame> {
    match frame.format {
        PixelFormat::Gray => std::borrow::Cow::Borrowed(frame),
        PixelFormat::Rgb => {
            std::borrow::Cow::Owned(to_grayscale(frame).expect("rgb frame converts"))
        }
    }
}

/// Replicates a gray plane into three identical channels.
pub fn gray_to_rgb(frame: &Frame) -> Result<Frame, ImageError> {
    frame.require_channels(PixelFormat::Gray)?;
    let data = frame.data.iter().flat_map(|&v| [v, v, v]).collect();
    Ok(Frame {
        format: PixelFormat::Rgb,
        data,
        ..frame.header()
    })
}

pub fn crop(frame: &Frame, bbox: &BoundingBox) -> Result<Frame, ImageError> {
    if !bbox.fits(frame.width, frame.height) {
        return Err(ImageError::OutOfBounds {
            bbox: *bbox,
            width: frame.width,
            height: frame.height,
        });
    }
    let c = frame.channels() as usize;
    let row_len = bbox.w as usize * c;
    let mut data = Vec::with_capacity(row_len * bbox.h as usize);
    for y in bbox.y..bbox.bottom() {
        let start = (y as usize * frame.width as usize + bbox.x as usize) * c;
        data.extend_from_slice(&frame.data[start..start + row_len]);
    }
    Ok(Frame {
        width: bbox.w,
        height: bbox.h,
        format: frame.format,
        timestamp_us: frame.timestamp_us,
        seq: frame.seq,
        data,
    })
}

/// Axis-aligned pixel box: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}x{})", self.x, self.y, self.w, self.h)
    }
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, ImageError> {
        if w == 0 || h == 0 {
            return Err(ImageError::EmptyBox);
        }
        Ok(BoundingBox { x, y, w, h })
    }

    /// Box spanning the inclusive pixel extent `[x0, x1] x [y0, y1]`.
    pub fn from_extent(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        debug_assert!(x1 >= x0 && y1 >= y0);
        BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && (self.x as u64 + self.w as u64) <= width as u64
            && (self.y as u64 + self.h as u64) <= height as u64
    }

    pub fn centroid(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        BoundingBox {
            x: x0,
            y: y0,
            w: self.right().max(other.right()) - x0,
            h: self.bottom().max(other.bottom()) - y0,
        }
    }

    /// True when `other` lies entirely within `self` (edges may touch).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64
            && y >= self.y as f64
            && x <= self.right() as f64
            && y <= self.bottom() as f64
    }

    /// Chebyshev gap between two boxes in pixels; 0 when they touch or overlap.
    pub fn gap(&self, other: &BoundingBox) -> u32 {
        let gx = other
            .x
            .saturating_sub(self.right())
            .max(self.x.saturating_sub(other.right()));
        let gy = other
            .y
            .saturating_sub(self.bottom())
            .max(self.y.saturating_sub(other.bottom()));
        gx.max(gy)
    }
}

pub fn bbox_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn grayscale_reference_values() {
        let f = Frame::rgb(3, 1, vec![0, 0, 0, 255, 255, 255, 255, 0, 0]).unwrap();
        let g = to_grayscale(&f).unwrap();
        assert_eq!(g.data(), &[0, 255, 76]);
        assert_eq!(g.format(), PixelFormat::Gray);
    }

    #[test]
    fn grayscale_preserves_timing_and_rejects_gray() {
        let f = Frame::filled(2, 2, PixelFormat::Rgb, 9)
            .unwrap()
            .with_timing(7, 1234);
        let g = to_grayscale(&f).unwrap();
        assert_eq!((g.seq(), g.timestamp_us(), g.dims()), (7, 1234, (2, 2)));
        assert_eq!(
            to_grayscale(&g),
            Err(ImageError::ChannelMismatch {
                expected: 3,
                actual: 1
            })
        );
    }

    #[test]
    fn frame_rejects_bad_length() {
        assert!(matches!(
            Frame::gray(2, 2, vec![0; 3]),
            Err(ImageError::LengthMismatch {
                expected: 4,
                actual: 3
            })
        ));
        assert!(matches!(
            Frame::gray(0, 2, vec![]),
            Err(ImageError::ZeroDimension { .. })
        ));
    }

    #[test]
    fn crop_identity_and_single_pixel() {
        let f = Frame::from_fn_gray(4, 4, |x, y| (y * 4 + x) as u8).unwrap();
        assert_eq!(crop(&f, &f.full_box()).unwrap(), f);
        let one = crop(&f, &bx(2, 3, 1, 1)).unwrap();
        assert_eq!(one.data(), f.pixel(2, 3));
        assert!(matches!(
            crop(&f, &bx(1, 0, 4, 1)),
            Err(ImageError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn iou_reference_values() {
        let a = bx(0, 0, 2, 2);
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &bx(5, 5, 2, 2)), 0.0);
        assert!((bbox_iou(&a, &bx(1, 1, 2, 2)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn gap_between_boxes() {
        let a = bx(0, 0, 2, 2);
        assert_eq!(a.gap(&bx(2, 0, 1, 1)), 0);
        assert_eq!(a.gap(&bx(5, 1, 1, 1)), 3);
        assert_eq!(bx(5, 1, 1, 1).gap(&a), 3);
        assert_eq!(a.gap(&bx(1, 1, 3, 3)), 0);
    }
}
