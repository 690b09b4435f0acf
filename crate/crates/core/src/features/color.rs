use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::imaging::Frame;

/// First three moments of one color channel, all in sample units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMoments {
    /// Mean.
    pub mu: f64,
    /// Standard deviation (population form).
    pub sigma: f64,
    /// Signed cube root of the third central moment.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorMoments {
    pub channels: Vec<ChannelMoments>,
}

impl ColorMoments {
    /// Moments of every channel of `frame`, over all of its pixels.
    pub fn of_frame(frame: &Frame) -> ColorMoments {
        let planes = frame.planes();
        let views: Vec<&[u8]> = planes.iter().map(Vec::as_slice).collect();
        color_moments(&views).expect("frames are never empty")
    }

    /// Moments of channel `i`; gray inputs answer every index with channel 0.
    pub fn channel(&self, i: usize) -> &ChannelMoments {
        self.channels.get(i).unwrap_or(&self.channels[0])
    }
}

/// Per-channel mean, standard deviation and cube-rooted skew.
///
/// `channels[i][j]` is sample `j` of channel `i`; every channel must hold the
/// same number of samples. Uses the two-pass form (mean first) in `f64`.
pub fn color_moments<T>(channels: &[&[T]]) -> Result<ColorMoments, FeatureError>
where
    T: Copy + Into<f64>,
{
    let n = channels.first().map_or(0, |c| c.len());
    if n == 0 {
        return Err(FeatureError::EmptyRegion);
    }
    for (i, c) in channels.iter().enumerate() {
        if c.len() != n {
            return Err(FeatureError::ChannelLength {
                channel: i,
                expected: n,
                actual: c.len(),
            });
        }
    }
    let nf = n as f64;
    let channels = channels
        .iter()
        .map(|samples| {
            let mu = samples.iter().map(|&p| p.into()).sum::<f64>() / nf;
            let (mut m2, mut m3) = (0.0, 0.0);
            for &p in samples.iter() {
                let d = p.into() - mu;
                let d2 = d * d;
                m2 += d2;
                m3 += d2 * d;
            }
            ChannelMoments {
                mu,
                sigma: (m2 / nf).sqrt(),
                // cbrt keeps the sign of a negative third moment.
                s: (m3 / nf).cbrt(),
            }
        })
        .collect();
    Ok(ColorMoments { channels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_region_is_degenerate() {
        let m = color_moments(&[&[128u8; 50][..]]).unwrap();
        assert_eq!(
            m.channels[0],
            ChannelMoments {
                mu: 128.0,
                sigma: 0.0,
                s: 0.0
            }
        );
    }

    #[test]
    fn two_point_distribution() {
        let m = color_moments(&[&[0u8, 255][..]]).unwrap();
        assert_eq!(m.channels[0].mu, 127.5);
        assert_eq!(m.channels[0].sigma, 127.5);
        assert_eq!(m.channels[0].s, 0.0);
    }

    #[test]
    fn negative_skew_keeps_sign() {
        // Long left tail: {0, 10, 10, 10}.
        let m = color_moments(&[&[0u8, 10, 10, 10][..]]).unwrap();
        assert!(m.channels[0].s < 0.0);
    }

    #[test]
    fn empty_and_ragged_inputs() {
        let empty: [&[u8]; 1] = [&[]];
        assert_eq!(color_moments(&empty), Err(FeatureError::EmptyRegion));
        assert_eq!(color_moments::<u8>(&[]), Err(FeatureError::EmptyRegion));
        assert!(matches!(
            color_moments(&[&[1u8, 2][..], &[1u8][..]]),
            Err(FeatureError::ChannelLength { channel: 1, .. })
        ));
    }

    #[test]
    fn frame_channels_are_separated() {
        let f = Frame::rgb(2, 1, vec![10, 20, 30, 30, 40, 50]).unwrap();
        let m = ColorMoments::of_frame(&f);
        let mus: Vec<f64> = m.channels.iter().map(|c| c.mu).collect();
        assert_eq!(mus, vec![20.0, 30.0, 40.0]);
    }
}
