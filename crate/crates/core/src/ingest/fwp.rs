//! FWP v1: one frame per message, big-endian header followed by raw samples.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FWP1"
//!      4     4  width
//!      8     4  height
//!     12     4  channels (1 or 3)
//!     16     8  timestamp_us
//!     24     4  payload_len = width * height * channels
//!     28     n  interleaved samples
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::imaging::{Frame, PixelFormat};

pub const MAGIC: [u8; 4] = *b"FWP1";
pub const HEADER_LEN: usize = 28;
/// Largest payload a reader accepts (4096 x 4096 x 3 is well under this).
pub const MAX_PAYLOAD: u32 = 1 << 28;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}, expected \"FWP1\"")]
    BadMagic([u8; 4]),
    #[error("frame dimensions must be non-zero, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("channels must be 1 or 3, got {0}")]
    BadChannels(u32),
    #[error("payload_len {declared} does not match width*height*channels = {expected}")]
    LengthMismatch { declared: u64, expected: u64 },
    #[error("payload of {0} bytes exceeds the reader limit")]
    Oversize(u64),
    #[error("message truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} unexpected bytes after the payload")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub format: PixelFormat,
    pub timestamp_us: u64,
    pub payload_len: u32,
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().expect("4 bytes"))
}

/// Validates a 28-byte header.
pub fn parse_header(b: &[u8; HEADER_LEN]) -> Result<Header, ProtocolError> {
    let magic: [u8; 4] = b[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let width = be_u32(&b[4..8]);
    let height = be_u32(&b[8..12]);
    let channels = be_u32(&b[12..16]);
    let timestamp_us = u64::from_be_bytes(b[16..24].try_into().expect("8 bytes"));
    let payload_len = be_u32(&b[24..28]);
    if width == 0 || height == 0 {
        return Err(ProtocolError::ZeroDimension { width, height });
    }
    let format =
        PixelFormat::from_channels(channels).ok_or(ProtocolError::BadChannels(channels))?;
    let expected = width as u64 * height as u64 * channels as u64;
    if payload_len as u64 != expected {
        return Err(ProtocolError::LengthMismatch {
            declared: payload_len as u64,
            expected,
        });
    }
    if payload_len > MAX_PAYLOAD {
        return Err(ProtocolError::Oversize(payload_len as u64));
    }
    Ok(Header {
        width,
        height,
        format,
        timestamp_us,
        payload_len,
    })
}

pub fn encode_header(frame: &Frame) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&frame.width().to_be_bytes());
    h[8..12].copy_from_slice(&frame.height().to_be_bytes());
    h[12..16].copy_from_slice(&(frame.channels() as u32).to_be_bytes());
    h[16..24].copy_from_slice(&frame.timestamp_us().to_be_bytes());
    h[24..28].copy_from_slice(&(frame.data().len() as u32).to_be_bytes());
    h
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.data().len());
    out.extend_from_slice(&encode_header(frame));
    out.extend_from_slice(frame.data());
    out
}

/// Decodes exactly one message. The frame's `seq` is 0; sources assign it.
pub fn decode(bytes: &[u8]) -> Result<Frame, ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let header = parse_header(bytes[..HEADER_LEN].try_into().expect("header"))?;
    let total = HEADER_LEN + header.payload_len as usize;
    if bytes.len() < total {
        return Err(ProtocolError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(ProtocolError::TrailingBytes(bytes.len() - total));
    }
    Ok(build(header, bytes[HEADER_LEN..].to_vec()))
}

fn build(h: Header, payload: Vec<u8>) -> Frame {
    Frame::new(h.width, h.height, h.format, payload)
        .expect("header validated")
        .with_timing(0, h.timestamp_us)
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads one message from a stream. `Ok(None)` means the peer closed the
/// stream cleanly between messages; a close mid-message is `Truncated`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_up_to(r, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    if got < HEADER_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            available: got,
        }
        .into());
    }
    let h = parse_header(&header)?;
    let mut payload = vec![0u8; h.payload_len as usize];
    let got = read_up_to(r, &mut payload)?;
    if got < payload.len() {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN + payload.len(),
            available: HEADER_LEN + got,
        }
        .into());
    }
    Ok(Some(build(h, payload)))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&encode_header(frame))?;
    w.write_all(frame.data())?;
    w.flush()
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_layout() {
        let f = Frame::gray(1, 1, vec![7]).unwrap();
        let b = encode(&f);
        assert_eq!(b.len(), 29);
        assert_eq!(&b[..4], b"FWP1");
        assert_eq!(&b[4..16], &[0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(&b[16..24], &[0; 8]);
        assert_eq!(&b[24..28], &[0, 0, 0, 1]);
        assert_eq!(b[28], 0x07);
        assert_eq!(decode(&b).unwrap(), f);
    }

    #[test]
    fn rejects_malformed() {
        let f = Frame::rgb(2, 1, vec![1, 2, 3, 4, 5, 6])
            .unwrap()
            .with_timing(0, 99);
        let good = encode(&f);

        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(ProtocolError::BadMagic(_))));

        let mut b = good.clone();
        b[27] = 5;
        assert!(matches!(
            decode(&b),
            Err(ProtocolError::LengthMismatch {
                declared: 5,
                expected: 6
            })
        ));

        let mut b = good.clone();
        b[4..8].copy_from_slice(&0u32.to_be_bytes());
        assert!(matches!(
            decode(&b),
            Err(ProtocolError::ZeroDimension { .. })
        ));

        let mut b = good.clone();
        b[15] = 2;
        assert_eq!(decode(&b), Err(ProtocolError::BadChannels(2)));

        assert!(matches!(
            decode(&good[..30]),
            Err(ProtocolError::Truncated { .. })
        ));
        let mut b = good.clone();
        b.push(0);
        assert_eq!(decode(&b), Err(ProtocolError::TrailingBytes(1)));
    }

    #[test]
    fn stream_reads_until_clean_eof() {
        let a = Frame::gray(2, 2, vec![1, 2, 3, 4])
            .unwrap()
            .with_timing(0, 10);
        let b = Frame::gray(2, 2, vec![5, 6, 7, 8])
            .unwrap()
            .with_timing(0, 20);
        let mut buf = Vec::new();
        write_frame(&mut buf, &a).unwrap();
        write_frame(&mut buf, &b).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_frame(&mut r).unwrap(), Some(a));
        assert_eq!(read_frame(&mut r).unwrap(), Some(b));
        assert_eq!(read_frame(&mut r).unwrap(), None);

        let mut r = &buf[..40];
        read_frame(&mut r).unwrap();
        assert!(matches!(
            read_frame(&mut r),
            Err(WireError::Protocol(ProtocolError::Truncated { .. }))
        ));
    }
}
