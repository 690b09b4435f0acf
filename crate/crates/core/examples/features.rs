//! Color, texture and corner descriptors of a synthetic patch.

use floatwatch::features::{
    glcm_texture, harris_corners, ColorMoments, HarrisParams, DEFAULT_GLCM_LEVELS,
    DEFAULT_GLCM_OFFSETS,
};
use floatwatch::imaging::{to_grayscale, Frame};

fn main() {
    // A checkerboard with a reddish tint.
    let mut rgb = Vec::new();
    for y in 0..32u32 {
        for x in 0..32u32 {
            let v = if (x / 8 + y / 8) % 2 == 0 { 200 } else { 40 };
            rgb.extend_from_slice(&[v, v / 2, v / 3]);
        }
    }
    let frame = Frame::rgb(32, 32, rgb).unwrap();

    let moments = ColorMoments::of_frame(&frame);
    for (name, m) in ["R", "G", "B"].iter().zip(&moments.channels) {
        println!("{name}: mu {:.2} sigma {:.2} s {:.2}", m.mu, m.sigma, m.s);
    }

    let gray = to_grayscale(&frame).unwrap();
    let texture = glcm_texture(&gray, DEFAULT_GLCM_LEVELS, &DEFAULT_GLCM_OFFSETS).unwrap();
    for t in &texture.per_offset {
        println!(
            "offset {:?}: contrast {:.3} energy {:.3} homogeneity {:.3} correlation {:.3}",
            t.offset, t.contrast, t.energy, t.homogeneity, t.correlation
        );
    }

    let corners = harris_corners(&gray, &HarrisParams::default()).unwrap();
    println!("{} corners, strongest:", corners.len());
    for c in corners.corners.iter().take(5) {
        println!("  ({}, {}) response {:.3e}", c.x, c.y, c.response);
    }
}
