//! YUV4MPEG2 streams with 4:2:0 or mono sampling.
//!
//! 4:2:0 frames decode to RGB using BT.601 limited-range coefficients and
//! nearest-neighbour chroma upsampling. Mono frames keep their Y samples
//! unchanged as a gray frame.

use std::io::{self, BufRead, Write};

use crate::imaging::{Frame, PixelFormat};

use super::IngestError;

const MAGIC: &[u8] = b"YUV4MPEG2";
const MAX_LINE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chroma {
    C420,
    Mono,
}

impl Chroma {
    fn payload_len(self, w: u32, h: u32) -> usize {
        let luma = w as usize * h as usize;
        match self {
            Chroma::Mono => luma,
            Chroma::C420 => luma + 2 * chroma_len(w, h),
        }
    }
}

fn chroma_len(w: u32, h: u32) -> usize {
    w.div_ceil(2) as usize * h.div_ceil(2) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: u32,
    pub height: u32,
    /// Frame rate as `num:den`, if the stream declares one.
    pub fps: Option<(u32, u32)>,
    pub chroma: Chroma,
}

pub fn parse_header(line: &str) -> Result<Y4mHeader, IngestError> {
    let bad = |m: String| IngestError::FormatUnrecognized(m);
    let mut tokens = line.split(' ');
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(bad("missing YUV4MPEG2 signature".into()));
    }
    let (mut width, mut height, mut fps, mut chroma) = (None, None, None, Chroma::C420);
    for tok in tokens.filter(|t| !t.is_empty()) {
        let (tag, val) = tok.split_at(1);
        match tag {
            "W" => {
                width = Some(
                    val.parse::<u32>()
                        .map_err(|_| bad(format!("bad width {val:?}")))?,
                )
            }
            "H" => {
                height = Some(
                    val.parse::<u32>()
                        .map_err(|_| bad(format!("bad height {val:?}")))?,
                )
            }
            "F" => {
                let parsed = val
                    .split_once(':')
                    .and_then(|(n, d)| Some((n.parse::<u32>().ok()?, d.parse::<u32>().ok()?)))
                    .filter(|&(n, d)| n > 0 && d > 0);
                fps = Some(parsed.ok_or_else(|| bad(format!("bad frame rate {val:?}")))?);
            }
            "C" => {
                chroma = match val {
                    "420mpeg2" | "420" => Chroma::C420,
                    "mono" => Chroma::Mono,
                    other => return Err(bad(format!("unsupported chroma C{other}"))),
                }
            }
            _ => {}
        }
    }
    match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Ok(Y4mHeader {
            width: w,
            height: h,
            fps,
            chroma,
        }),
        _ => Err(bad("missing or zero W/H".into())),
    }
}

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

pub fn yuv_to_rgb(y: u8, u: u8, v: u8) -> [u8; 3] {
    let c = 298 * (y as i32 - 16);
    let d = u as i32 - 128;
    let e = v as i32 - 128;
    [
        clamp_u8((c + 409 * e + 128) >> 8),
        clamp_u8((c - 100 * d - 208 * e + 128) >> 8),
        clamp_u8((c + 516 * d + 128) >> 8),
    ]
}

pub fn rgb_to_yuv(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (r, g, b) = (r as i32, g as i32, b as i32);
    [
        clamp_u8(((66 * r + 129 * g + 25 * b + 128) >> 8) + 16),
        clamp_u8(((-38 * r - 74 * g + 112 * b + 128) >> 8) + 128),
        clamp_u8(((112 * r - 94 * g - 18 * b + 128) >> 8) + 128),
    ]
}

pub struct Y4mReader<R> {
    inner: R,
    header: Y4mHeader,
    offset: u64,
    frames: u64,
    fps: f64,
    done: bool,
}

impl<R: BufRead> Y4mReader<R> {
    /// Reads the stream header. `fps_hint` overrides the declared rate;
    /// with neither, frames are 30 fps apart.
    pub fn new(mut inner: R, fps_hint: Option<f64>) -> Result<Self, IngestError> {
        let mut offset = 0;
        let line = match read_line(&mut inner, &mut offset) {
            Ok(Some(line)) => line,
            Ok(None) => return Err(IngestError::FormatUnrecognized("empty stream".into())),
            Err(IngestError::Decode { .. }) => {
                return Err(IngestError::FormatUnrecognized(
                    "no complete header line".into(),
                ))
            }
            Err(e) => return Err(e),
        };
        if !line.starts_with(MAGIC) {
            return Err(IngestError::FormatUnrecognized(
                "missing YUV4MPEG2 signature".into(),
            ));
        }
        let text = std::str::from_utf8(&line)
            .map_err(|_| IngestError::FormatUnrecognized("header is not ASCII".into()))?;
        let header = parse_header(text)?;
        let fps = fps_hint
            .or(header.fps.map(|(n, d)| n as f64 / d as f64))
            .unwrap_or(30.0);
        Ok(Y4mReader {
            inner,
            header,
            offset,
            frames: 0,
            fps,
            done: false,
        })
    }

    pub fn header(&self) -> &Y4mHeader {
        &self.header
    }

    pub fn format(&self) -> PixelFormat {
        match self.header.chroma {
            Chroma::C420 => PixelFormat::Rgb,
            Chroma::Mono => PixelFormat::Gray,
        }
    }

    /// Next frame, numbered from 0, or `None` at end of file.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, IngestError> {
        if self.done {
            return Ok(None);
        }
        let marker_at = self.offset;
        let Some(line) = read_line(&mut self.inner, &mut self.offset)? else {
            self.done = true;
            return Ok(None);
        };
        if !(line == b"FRAME" || line.starts_with(b"FRAME ")) {
            self.done = true;
            return Err(IngestError::Decode {
                offset: marker_at,
                message: "expected FRAME marker".into(),
            });
        }
        let Y4mHeader {
            width,
            height,
            chroma,
            ..
        } = self.header;
        let mut payload = vec![0u8; chroma.payload_len(width, height)];
        let got = read_full(&mut self.inner, &mut payload)?;
        self.offset += got as u64;
        if got < payload.len() {
            self.done = true;
            return Err(IngestError::Decode {
                offset: self.offset,
                message: format!(
                    "frame {} payload truncated: {got} of {} bytes",
                    self.frames,
                    payload.len()
                ),
            });
        }
        let frame = match chroma {
            Chroma::Mono => Frame::gray(width, height, payload),
            Chroma::C420 => Frame::rgb(width, height, upsample_420(&payload, width, height)),
        }
        .expect("sized from header");
        let seq = self.frames;
        self.frames += 1;
        let ts = super::synthetic_ts(seq, self.fps);
        Ok(Some(frame.with_timing(seq, ts)))
    }
}

fn upsample_420(planes: &[u8], w: u32, h: u32) -> Vec<u8> {
    let (w, h) = (w as usize, h as usize);
    let cw = w.div_ceil(2);
    let (ys, rest) = planes.split_at(w * h);
    let (us, vs) = rest.split_at(rest.len() / 2);
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let ci = (y / 2) * cw + x / 2;
            out.extend_from_slice(&yuv_to_rgb(ys[y * w + x], us[ci], vs[ci]));
        }
    }
    out
}

/// Line without its `\n`, or `None` at a clean EOF.
fn read_line<R: BufRead>(r: &mut R, offset: &mut u64) -> Result<Option<Vec<u8>>, IngestError> {
    let mut line = Vec::new();
    let n = io::Read::take(&mut *r, MAX_LINE as u64).read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(None);
    }
    if line.last() != Some(&b'\n') {
        return Err(IngestError::Decode {
            offset: *offset + n as u64,
            message: "unterminated header line".into(),
        });
    }
    *offset += n as u64;
    line.pop();
    Ok(Some(line))
}

fn read_full<R: io::Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
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

/// Writes RGB frames as `C420mpeg2` (chroma averaged over 2x2 blocks) or
/// gray frames as `Cmono`.
pub struct Y4mWriter<W: Write> {
    inner: W,
    width: u32,
    height: u32,
    format: PixelFormat,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(
        mut inner: W,
        width: u32,
        height: u32,
        format: PixelFormat,
        fps: (u32, u32),
    ) -> io::Result<Self> {
        let tag = match format {
            PixelFormat::Rgb => "420mpeg2",
            PixelFormat::Gray => "mono",
        };
        writeln!(
            inner,
            "YUV4MPEG2 W{width} H{height} F{}:{} Ip A1:1 C{tag}",
            fps.0, fps.1
        )?;
        Ok(Y4mWriter {
            inner,
            width,
            height,
            format,
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> io::Result<()> {
        if frame.dims() != (self.width, self.height) || frame.format() != self.format {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "frame shape differs from stream header",
            ));
        }
        self.inner.write_all(b"FRAME\n")?;
        match self.format {
            PixelFormat::Gray => self.inner.write_all(frame.data()),
            PixelFormat::Rgb => self.inner.write_all(&encode_420(frame)),
        }
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

#[allow(clippy::needless_range_loop)]
fn encode_420(frame: &Frame) -> Vec<u8> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let yuv: Vec<[u8; 3]> = frame
        .data()
        .chunks_exact(3)
        .map(|p| rgb_to_yuv(p[0], p[1], p[2]))
        .collect();
    let mut out = Vec::with_capacity(w * h + 2 * cw * ch);
    out.extend(yuv.iter().map(|p| p[0]));
    for plane in 1..3 {
        for cy in 0..ch {
            for cx in 0..cw {
                let (mut sum, mut n) = (0u32, 0u32);
                for y in (2 * cy)..(2 * cy + 2).min(h) {
                    for x in (2 * cx)..(2 * cx + 2).min(w) {
                        sum += yuv[y * w + x][plane] as u32;
                        n += 1;
                    }
                }
                out.push(((sum + n / 2) / n) as u8);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_fields() {
        let h = parse_header("YUV4MPEG2 W320 H240 F30:1 C420mpeg2").unwrap();
        assert_eq!(
            (h.width, h.height, h.fps, h.chroma),
            (320, 240, Some((30, 1)), Chroma::C420)
        );
        let h = parse_header("YUV4MPEG2 H2 W4 Ip").unwrap();
        assert_eq!(
            (h.width, h.height, h.fps, h.chroma),
            (4, 2, None, Chroma::C420)
        );
        assert_eq!(
            parse_header("YUV4MPEG2 W4 H2 Cmono").unwrap().chroma,
            Chroma::Mono
        );
        assert!(matches!(
            parse_header("YUV4MPEG2 W4 H2 C444"),
            Err(IngestError::FormatUnrecognized(_))
        ));
        assert!(parse_header("YUV4MPEG2 W4").is_err());
        assert!(parse_header("YUV4MPEG2 W4 H2 F0:1").is_err());
    }

    #[test]
    fn bt601_reference_points() {
        assert_eq!(yuv_to_rgb(16, 128, 128), [0, 0, 0]);
        assert_eq!(yuv_to_rgb(235, 128, 128), [255, 255, 255]);
        assert_eq!(rgb_to_yuv(0, 0, 0), [16, 128, 128]);
        assert_eq!(rgb_to_yuv(255, 255, 255), [235, 128, 128]);
        for v in [0u8, 60, 128, 200, 255] {
            let [y, u, w] = rgb_to_yuv(v, v, v);
            let back = yuv_to_rgb(y, u, w);
            assert!(
                back.iter().all(|&c| (c as i32 - v as i32).abs() <= 2),
                "{v} -> {back:?}"
            );
        }
    }

    #[test]
    fn mono_round_trip_and_timestamps() {
        let mut w = Y4mWriter::new(Vec::new(), 3, 2, PixelFormat::Gray, (10, 1)).unwrap();
        let a = Frame::gray(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let b = Frame::gray(3, 2, vec![9; 6]).unwrap();
        w.write_frame(&a).unwrap();
        w.write_frame(&b).unwrap();
        let bytes = w.finish().unwrap();
        let mut r = Y4mReader::new(bytes.as_slice(), None).unwrap();
        let fa = r.next_frame().unwrap().unwrap();
        let fb = r.next_frame().unwrap().unwrap();
        assert_eq!(fa.data(), a.data());
        assert_eq!(fb.data(), b.data());
        assert_eq!((fa.seq(), fa.timestamp_us()), (0, 0));
        assert_eq!((fb.seq(), fb.timestamp_us()), (1, 100_000));
        assert!(r.next_frame().unwrap().is_none());
        assert!(r.next_frame().unwrap().is_none());
    }

    #[test]
    fn odd_dims_rgb_round_trip_is_close() {
        let data: Vec<u8> = (0..5 * 3 * 3).map(|i| 40 + (i % 7) as u8).collect();
        let f = Frame::rgb(5, 3, data).unwrap();
        let mut w = Y4mWriter::new(Vec::new(), 5, 3, PixelFormat::Rgb, (25, 1)).unwrap();
        w.write_frame(&f).unwrap();
        let bytes = w.finish().unwrap();
        let mut r = Y4mReader::new(bytes.as_slice(), Some(50.0)).unwrap();
        let g = r.next_frame().unwrap().unwrap();
        assert_eq!(g.dims(), (5, 3));
        assert!(f
            .data()
            .iter()
            .zip(g.data())
            .all(|(a, b)| (*a as i32 - *b as i32).abs() <= 12));
        assert_eq!(r.next_frame().unwrap(), None);
    }

    #[test]
    fn truncated_payload_names_offset() {
        let mut bytes = b"YUV4MPEG2 W2 H2 Cmono\nFRAME\n\x01\x02\x03\x04FRAME\n\x05".to_vec();
        let mut r = Y4mReader::new(bytes.as_slice(), None).unwrap();
        r.next_frame().unwrap();
        match r.next_frame() {
            Err(IngestError::Decode { offset, .. }) => assert_eq!(offset, bytes.len() as u64),
            other => panic!("{other:?}"),
        }
        assert!(r.next_frame().unwrap().is_none());
        bytes.truncate(22);
        bytes.extend_from_slice(b"FRAMX\n");
        let mut r = Y4mReader::new(bytes.as_slice(), None).unwrap();
        assert!(matches!(
            r.next_frame(),
            Err(IngestError::Decode { offset: 22, .. })
        ));
    }
}
