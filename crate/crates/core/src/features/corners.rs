//! Harris corner detector.
//!
//! 3x3 Sobel gradients, structure tensor smoothed by the 3x3 binomial kernel
//! `[1 2 1]^T [1 2 1] / 16`, response `det(M) - k * trace(M)^2`. A response is
//! only defined where both kernels fit entirely inside the frame (a 2-pixel
//! margin), so corner positions are exactly translation covariant.

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::imaging::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarrisParams {
    pub k: f64,
    pub threshold: f64,
    pub nms_radius: u32,
}

impl Default for HarrisParams {
    fn default() -> Self {
        HarrisParams {
            k: 0.04,
            threshold: 1e6,
            nms_radius: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: u32,
    pub y: u32,
    pub response: f64,
}

/// Corners ordered by descending response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    pub corners: Vec<Corner>,
}

impl CornerSet {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }
}

/// Dense Harris response; zero inside the 2-pixel border.
pub fn harris_response(gray: &Frame, k: f64) -> Result<Vec<f64>, FeatureError> {
    gray.require_gray()?;
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    if w < 3 || h < 3 {
        return Err(FeatureError::DegenerateInput(format!(
            "Harris needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let p = |x: usize, y: usize| gray.data()[y * w + x] as f64;

    let n = w * h;
    let (mut ixx, mut iyy, mut ixy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x - 1, y) + p(x - 1, y + 1));
            let gy = (p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x, y - 1) + p(x + 1, y - 1));
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }

    const KERNEL: [f64; 3] = [1.0, 2.0, 1.0];
    let mut response = vec![0.0; n];
    for y in 2..h.saturating_sub(2) {
        for x in 2..w.saturating_sub(2) {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for (ky, wy) in KERNEL.iter().enumerate() {
                for (kx, wx) in KERNEL.iter().enumerate() {
                    let i = (y + ky - 1) * w + (x + kx - 1);
                    let wgt = wx * wy / 16.0;
                    a += wgt * ixx[i];
                    b += wgt * iyy[i];
                    c += wgt * ixy[i];
                }
            }
            let det = a * b - c * c;
            let trace = a + b;
            response[y * w + x] = det - k * trace * trace;
        }
    }
    Ok(response)
}

pub fn harris_corners(gray: &Frame, params: &HarrisParams) -> Result<CornerSet, FeatureError> {
    let response = harris_response(gray, params.k)?;
    let w = gray.width() as usize;
    let floor = params.threshold.max(0.0);

    let mut candidates: Vec<Corner> = response
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > floor)
        .map(|(i, &r)| Corner {
            x: (i % w) as u32,
            y: (i / w) as u32,
            response: r,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });

    let r2 = params.nms_radius as i64 * params.nms_radius as i64;
    let mut kept: Vec<Corner> = Vec::new();
    for c in candidates {
        let suppressed = kept.iter().any(|k| {
            let dx = k.x as i64 - c.x as i64;
            let dy = k.y as i64 - c.y as i64;
            dx * dx + dy * dy <= r2
        });
        if !suppressed {
            kept.push(c);
        }
    }
    Ok(CornerSet { corners: kept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_frame_has_no_corners() {
        let f = Frame::from_fn_gray(16, 16, |_, _| 90).unwrap();
        assert!(harris_corners(&f, &HarrisParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn square_yields_four_vertices() {
        // Square occupies [10, 20) x [10, 20).
        let f = Frame::from_fn_gray(32, 32, |x, y| {
            if (10..20).contains(&x) && (10..20).contains(&y) {
                255
            } else {
                0
            }
        })
        .unwrap();
        let set = harris_corners(&f, &HarrisParams::default()).unwrap();
        assert_eq!(set.len(), 4, "{set:?}");
        for (vx, vy) in [(10.0, 10.0), (19.0, 10.0), (10.0, 19.0), (19.0, 19.0)] {
            assert!(set
                .corners
                .iter()
                .any(|c| { (c.x as f64 - vx).abs() <= 2.0 && (c.y as f64 - vy).abs() <= 2.0 }));
        }
    }

    #[test]
    fn step_edge_has_no_corners() {
        let f = Frame::from_fn_gray(20, 20, |x, _| if x < 10 { 0 } else { 255 }).unwrap();
        let resp = harris_response(&f, 0.04).unwrap();
        assert!(resp.iter().all(|&r| r <= 0.0));
        assert!(harris_corners(&f, &HarrisParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn too_small() {
        let f = Frame::from_fn_gray(2, 5, |_, _| 0).unwrap();
        assert!(matches!(
            harris_corners(&f, &HarrisParams::default()),
            Err(FeatureError::DegenerateInput(_))
        ));
    }
}
