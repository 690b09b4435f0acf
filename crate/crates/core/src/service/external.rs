//! Out-of-process detectors.
//!
//! The client sends each frame as one FWP message and reads back exactly one
//! line of JSON:
//!
//! ```json
//! {"detections":[{"x":4,"y":2,"w":10,"h":8,"label":"debris","confidence":0.75}]}
//! ```
//!
//! The connection is kept open across frames and re-established after any
//! failure.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::detect::{validate_detections, DetectError, Detection, DetectorBackend, Label};
use crate::imaging::{BoundingBox, Frame};
use crate::ingest::fwp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireDetection {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub label: Label,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireReply {
    pub detections: Vec<WireDetection>,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        WireDetection {
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            label: d.label,
            confidence: d.confidence,
        }
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

pub struct ExternalBackend {
    address: String,
    timeout: Duration,
    conn: Option<Connection>,
}

impl ExternalBackend {
    pub fn new(address: &str, timeout: Duration) -> Self {
        ExternalBackend {
            address: address.to_string(),
            timeout,
            conn: None,
        }
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    fn connect(&self) -> Result<Connection, DetectError> {
        let unavailable =
            |e: std::io::Error| DetectError::BackendUnavailable(format!("{}: {e}", self.address));
        let addrs: Vec<_> = self
            .address
            .to_socket_addrs()
            .map_err(unavailable)?
            .collect();
        let mut last = std::io::Error::new(std::io::ErrorKind::NotFound, "no addresses resolved");
        for a in addrs {
            match TcpStream::connect_timeout(&a, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout))
                        .map_err(unavailable)?;
                    s.set_write_timeout(Some(self.timeout))
                        .map_err(unavailable)?;
                    s.set_nodelay(true).map_err(unavailable)?;
                    return Ok(Connection {
                        reader: BufReader::new(s.try_clone().map_err(unavailable)?),
                        writer: BufWriter::new(s),
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(unavailable(last))
    }

    fn exchange(&mut self, frame: &Frame) -> Result<String, DetectError> {
        if self.conn.is_none() {
            self.conn = Some(self.connect()?);
        }
        let conn = self.conn.as_mut().expect("connected above");
        let io = (|| {
            fwp::write_frame(&mut conn.writer, frame)?;
            let mut line = String::new();
            let n = conn.reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "backend closed the connection mid-reply",
                ));
            }
            Ok(line)
        })();
        io.map_err(|e| {
            self.conn = None;
            DetectError::BackendUnavailable(format!("{}: {e}", self.address))
        })
    }
}

/// Parses one reply line and checks it against the frame.
pub fn parse_reply(line: &str, dims: (u32, u32)) -> Result<Vec<Detection>, DetectError> {
    let reply: WireReply = serde_json::from_str(line.trim_end())
        .map_err(|e| DetectError::BackendProtocol(format!("invalid reply: {e}")))?;
    let dets = reply
        .detections
        .into_iter()
        .map(|d| {
            let bbox = BoundingBox::new(d.x, d.y, d.w, d.h)
                .map_err(|e| DetectError::BackendProtocol(format!("bad box: {e}")))?;
            Ok(Detection {
                bbox,
                label: d.label,
                confidence: d.confidence,
                source: "external".to_string(),
            })
        })
        .collect::<Result<Vec<_>, DetectError>>()?;
    validate_detections(&dets, dims)?;
    Ok(dets)
}

impl DetectorBackend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectError> {
        let line = self.exchange(frame)?;
        parse_reply(&line, frame.dims()).inspect_err(|_| {
            // The stream position is unknown after a bad reply.
            self.conn = None;
        })
    }
}

/// Serves the backend protocol on `listener`, one client at a time, calling
/// `handler` for every frame until it returns `None`.
pub fn serve_backend<F>(listener: TcpListener, mut handler: F) -> std::io::Result<()>
where
    F: FnMut(&Frame) -> Option<Vec<Detection>>,
{
    for stream in listener.incoming() {
        let stream = stream?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        loop {
            let frame = match fwp::read_frame(&mut reader) {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(e) => {
                    log::warn!("backend client sent a bad frame: {e}");
                    break;
                }
            };
            let Some(dets) = handler(&frame) else {
                return Ok(());
            };
            let reply = WireReply {
                detections: dets.iter().map(WireDetection::from).collect(),
            };
            serde_json::to_writer(&mut writer, &reply)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_parsing() {
        let d = parse_reply(
            r#"{"detections":[{"x":1,"y":2,"w":3,"h":4,"label":"vessel","confidence":0.75}]}"#,
            (10, 10),
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox, BoundingBox::new(1, 2, 3, 4).unwrap());
        assert_eq!(d[0].source, "external");
        assert!(parse_reply(r#"{"detections":[]}"#, (1, 1))
            .unwrap()
            .is_empty());

        for bad in [
            "not json",
            r#"{"detections":[{"x":8,"y":0,"w":4,"h":4,"label":"vessel","confidence":0.5}]}"#,
            r#"{"detections":[{"x":0,"y":0,"w":0,"h":4,"label":"vessel","confidence":0.5}]}"#,
            r#"{"detections":[{"x":0,"y":0,"w":1,"h":1,"label":"boat","confidence":0.5}]}"#,
            r#"{"detections":[{"x":0,"y":0,"w":1,"h":1,"label":"vessel","confidence":1.5}]}"#,
        ] {
            assert!(
                matches!(
                    parse_reply(bad, (10, 10)),
                    Err(DetectError::BackendProtocol(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn unreachable_backend() {
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let mut b = ExternalBackend::new(&format!("127.0.0.1:{port}"), Duration::from_millis(200));
        let f = Frame::gray(2, 2, vec![0; 4]).unwrap();
        assert!(matches!(
            b.detect(&f),
            Err(DetectError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn loopback_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let canned = Detection {
            bbox: BoundingBox::new(1, 1, 2, 2).unwrap(),
            label: Label::Debris,
            confidence: 0.75,
            source: "stub".into(),
        };
        let reply = canned.clone();
        let server = std::thread::spawn(move || {
            let mut n = 0;
            serve_backend(listener, |_| {
                n += 1;
                (n <= 2).then(|| vec![reply.clone()])
            })
        });
        let mut b = ExternalBackend::new(&addr, Duration::from_millis(500));
        let f = Frame::gray(4, 4, vec![0; 16]).unwrap();
        for _ in 0..2 {
            let got = b.detect(&f).unwrap();
            assert_eq!(
                got,
                vec![Detection {
                    source: "external".into(),
                    ..canned.clone()
                }]
            );
        }
        // Third frame: the stub hangs up without replying.
        assert!(matches!(
            b.detect(&f),
            Err(DetectError::BackendUnavailable(_))
        ));
        server.join().unwrap().unwrap();
    }
}
