//! Binary PGM (P5) and PPM (P6) with maxval 255.

use crate::imaging::{Frame, PixelFormat};

use super::IngestError;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> IngestError {
        IngestError::Decode {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, IngestError> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| IngestError::Decode {
                offset: start as u64,
                message: format!("{what} out of range"),
            })
    }
}

/// Parses one P5 or P6 image occupying all of `bytes`.
pub fn parse_pnm(bytes: &[u8]) -> Result<Frame, IngestError> {
    let format = match bytes.get(..2) {
        Some(b"P5") => PixelFormat::Gray,
        Some(b"P6") => PixelFormat::Rgb,
        _ => {
            return Err(IngestError::FormatUnrecognized(
                "not a binary PGM/PPM".into(),
            ))
        }
    };
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    if width == 0 || height == 0 {
        return Err(c.err(format!("zero dimension {width}x{height}")));
    }
    c.skip_space();
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(IngestError::Decode {
            offset: maxval_at as u64,
            message: format!("maxval {maxval} unsupported, only 255"),
        });
    }
    if !c.bytes.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(c.err("expected whitespace before raster"));
    }
    c.pos += 1;
    let need = width as usize * height as usize * format.channels() as usize;
    let raster = &bytes[c.pos..];
    if raster.len() < need {
        return Err(IngestError::Decode {
            offset: bytes.len() as u64,
            message: format!("raster truncated: need {need} bytes, have {}", raster.len()),
        });
    }
    if raster.len() > need {
        return Err(IngestError::Decode {
            offset: (c.pos + need) as u64,
            message: "trailing bytes after raster".into(),
        });
    }
    Ok(Frame::new(width, height, format, raster.to_vec()).expect("validated"))
}

/// Encodes as P5 (gray) or P6 (RGB) with a minimal header.
pub fn write_pnm(frame: &Frame) -> Vec<u8> {
    let magic = match frame.format() {
        PixelFormat::Gray => "P5",
        PixelFormat::Rgb => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_two_by_two() {
        let f = parse_pnm(b"P5 2 2 255 \x01\x02\x03\x04").unwrap();
        assert_eq!(f.dims(), (2, 2));
        assert_eq!(f.channels(), 1);
        assert_eq!(f.data(), &[1, 2, 3, 4]);
    }

    #[test]
    fn comments_and_round_trip() {
        let f = parse_pnm(b"P6\n# made by hand\n1 1\n255\n\x0a\x0b\x0c").unwrap();
        assert_eq!(f.data(), &[10, 11, 12]);
        assert_eq!(parse_pnm(&write_pnm(&f)).unwrap(), f);
    }

    #[test]
    fn errors_carry_offsets() {
        assert!(matches!(
            parse_pnm(b"P2 1 1 255 0"),
            Err(IngestError::FormatUnrecognized(_))
        ));
        match parse_pnm(b"P5 2 2 255 \x01\x02") {
            Err(IngestError::Decode { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("{other:?}"),
        }
        match parse_pnm(b"P5 2 2 65535 \x01\x02") {
            Err(IngestError::Decode { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("{other:?}"),
        }
        assert!(parse_pnm(b"P5 x").is_err());
    }
}
