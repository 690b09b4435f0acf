//! Gray-level co-occurrence statistics.
//!
//! Samples are quantized to `levels` bins (`q = v * levels / 256`). For every
//! displacement the matrix is symmetric (each pair counted both ways) and
//! normalized to unit mass before the statistics are taken.

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::imaging::Frame;

pub const DEFAULT_GLCM_LEVELS: usize = 8;
pub const DEFAULT_GLCM_OFFSETS: [(i32, i32); 2] = [(1, 0), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcmStats {
    pub offset: (i32, i32),
    pub contrast: f64,
    pub energy: f64,
    pub homogeneity: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureDescriptor {
    pub per_offset: Vec<GlcmStats>,
}

impl TextureDescriptor {
    /// Statistics averaged over all offsets.
    pub fn mean(&self) -> GlcmStats {
        let n = self.per_offset.len().max(1) as f64;
        let mut acc = GlcmStats {
            offset: (0, 0),
            contrast: 0.0,
            energy: 0.0,
            homogeneity: 0.0,
            correlation: 0.0,
        };
        for s in &self.per_offset {
            acc.contrast += s.contrast / n;
            acc.energy += s.energy / n;
            acc.homogeneity += s.homogeneity / n;
            acc.correlation += s.correlation / n;
        }
        acc
    }

    /// Descriptor of a perfectly flat patch; used where a region is too thin
    /// for any co-occurrence pair.
    pub fn flat() -> TextureDescriptor {
        TextureDescriptor {
            per_offset: vec![GlcmStats {
                offset: (0, 0),
                contrast: 0.0,
                energy: 1.0,
                homogeneity: 1.0,
                correlation: 0.0,
            }],
        }
    }
}

pub fn glcm_texture(
    gray: &Frame,
    levels: usize,
    offsets: &[(i32, i32)],
) -> Result<TextureDescriptor, FeatureError> {
    gray.require_gray()?;
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    if w < 2 || h < 2 {
        return Err(FeatureError::DegenerateInput(format!(
            "GLCM needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    if !(2..=256).contains(&levels) {
        return Err(FeatureError::DegenerateInput(format!(
            "GLCM levels must be in 2..=256, got {levels}"
        )));
    }
    if offsets.is_empty() {
        return Err(FeatureError::DegenerateInput("no GLCM offsets".into()));
    }

    let quantized: Vec<usize> = gray
        .data()
        .iter()
        .map(|&v| v as usize * levels / 256)
        .collect();

    let mut per_offset = Vec::with_capacity(offsets.len());
    let mut counts = vec![0u64; levels * levels];
    for &(dx, dy) in offsets {
        let (adx, ady) = ((dx as i64).abs(), (dy as i64).abs());
        if adx >= w || ady >= h || (dx == 0 && dy == 0) {
            return Err(FeatureError::DegenerateInput(format!(
                "offset ({dx},{dy}) does not fit a {w}x{h} frame"
            )));
        }
        counts.iter_mut().for_each(|c| *c = 0);
        let (x0, x1) = ((-dx as i64).max(0), w - (dx as i64).max(0));
        let (y0, y1) = ((-dy as i64).max(0), h - (dy as i64).max(0));
        for y in y0..y1 {
            let row = (y * w) as usize;
            let nrow = ((y + dy as i64) * w) as usize;
            for x in x0..x1 {
                let a = quantized[row + x as usize];
                let b = quantized[nrow + (x + dx as i64) as usize];
                counts[a * levels + b] += 1;
                counts[b * levels + a] += 1;
            }
        }
        per_offset.push(stats_from_counts(&counts, levels, (dx, dy)));
    }
    Ok(TextureDescriptor { per_offset })
}

fn stats_from_counts(counts: &[u64], levels: usize, offset: (i32, i32)) -> GlcmStats {
    let total: u64 = counts.iter().sum();
    let inv = 1.0 / total as f64;

    // Symmetric matrix: both marginals coincide.
    let mut marginal = vec![0.0; levels];
    for i in 0..levels {
        for j in 0..levels {
            marginal[i] += counts[i * levels + j] as f64 * inv;
        }
    }
    let mean: f64 = marginal.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
    let var: f64 = marginal
        .iter()
        .enumerate()
        .map(|(i, p)| (i as f64 - mean).powi(2) * p)
        .sum();

    let (mut contrast, mut energy, mut homogeneity, mut cov) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let c = counts[i * levels + j];
            if c == 0 {
                continue;
            }
            let p = c as f64 * inv;
            let d = i as f64 - j as f64;
            contrast += d * d * p;
            energy += p * p;
            homogeneity += p / (1.0 + d * d);
            cov += (i as f64 - mean) * (j as f64 - mean) * p;
        }
    }
    let correlation = if var > 0.0 { cov / var } else { 0.0 };
    GlcmStats {
        offset,
        contrast,
        energy,
        homogeneity,
        correlation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_frame() {
        let f = Frame::from_fn_gray(5, 4, |_, _| 77).unwrap();
        let t = glcm_texture(&f, 8, &DEFAULT_GLCM_OFFSETS).unwrap();
        for s in &t.per_offset {
            assert_eq!(
                (s.contrast, s.energy, s.homogeneity, s.correlation),
                (0.0, 1.0, 1.0, 0.0)
            );
        }
    }

    #[test]
    fn checkerboard_two_levels() {
        let f = Frame::from_fn_gray(6, 6, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 }).unwrap();
        let t = glcm_texture(&f, 2, &[(1, 0)]).unwrap();
        let s = t.per_offset[0];
        assert_eq!(s.energy, 0.5);
        assert_eq!(s.contrast, 1.0);
        assert_eq!(s.homogeneity, 0.5);
        assert!((s.correlation + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let tiny = Frame::from_fn_gray(1, 3, |_, _| 0).unwrap();
        assert!(matches!(
            glcm_texture(&tiny, 8, &[(1, 0)]),
            Err(FeatureError::DegenerateInput(_))
        ));
        let f = Frame::from_fn_gray(3, 3, |_, _| 0).unwrap();
        assert!(matches!(
            glcm_texture(&f, 8, &[(3, 0)]),
            Err(FeatureError::DegenerateInput(_))
        ));
        assert!(matches!(
            glcm_texture(&f, 1, &[(1, 0)]),
            Err(FeatureError::DegenerateInput(_))
        ));
        let rgb = Frame::filled(3, 3, crate::imaging::PixelFormat::Rgb, 0).unwrap();
        assert!(matches!(
            glcm_texture(&rgb, 8, &[(1, 0)]),
            Err(FeatureError::Image(_))
        ));
    }

    #[test]
    fn negative_offsets_match_their_mirror() {
        let f = Frame::from_fn_gray(7, 5, |x, y| ((x * 37 + y * 91) % 256) as u8).unwrap();
        let a = glcm_texture(&f, 8, &[(1, 0)]).unwrap().per_offset[0];
        let b = glcm_texture(&f, 8, &[(-1, 0)]).unwrap().per_offset[0];
        assert_eq!((a.contrast, a.energy), (b.contrast, b.energy));
    }
}
