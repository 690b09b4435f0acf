//! Read-only HTTP API over a running pipeline.
//!
//! | path | reply |
//! |------|-------|
//! | `GET /health` | `{"status": "ok" \| "starting" \| "draining" \| "stopped"}` |
//! | `GET /stats` | counters and latencies |
//! | `GET /events?since=SEQ` | retained events with frame seq > SEQ |
//! | `GET /frame/latest` | latest frame as PPM with detection boxes |

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::json;

use super::pipeline::{RunState, Shared};
use super::ServiceError;
use crate::detect::{Detection, Label};
use crate::imaging::{gray_to_rgb, Frame, PixelFormat};
use crate::ingest::write_pnm;

/// Outline width of burned-in boxes, pixels.
pub const BOX_THICKNESS: u32 = 3;

pub fn label_color(label: Label) -> [u8; 3] {
    match label {
        Label::Vessel => [255, 48, 48],
        Label::Vegetation => [48, 255, 48],
        Label::Debris => [255, 200, 0],
        Label::Unknown => [0, 160, 255],
    }
}

/// RGB copy of `frame` with each detection's box outlined inward.
pub fn annotate(frame: &Frame, detections: &[Detection]) -> Frame {
    let rgb = match frame.format() {
        PixelFormat::Rgb => frame.clone(),
        PixelFormat::Gray => gray_to_rgb(frame).expect("gray input"),
    };
    let (w, h) = rgb.dims();
    let (seq, ts) = (rgb.seq(), rgb.timestamp_us());
    let mut data = rgb.into_data();
    for d in detections {
        let b = d
            .bbox
            .intersection(&crate::imaging::BoundingBox { x: 0, y: 0, w, h });
        let Some(b) = b else { continue };
        let color = label_color(d.label);
        for y in b.y..b.bottom() {
            for x in b.x..b.right() {
                let edge = x - b.x < BOX_THICKNESS
                    || b.right() - 1 - x < BOX_THICKNESS
                    || y - b.y < BOX_THICKNESS
                    || b.bottom() - 1 - y < BOX_THICKNESS;
                if edge {
                    let i = (y as usize * w as usize + x as usize) * 3;
                    data[i..i + 3].copy_from_slice(&color);
                }
            }
        }
    }
    Frame::rgb(w, h, data)
        .expect("same shape")
        .with_timing(seq, ts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Reply {
    fn json(status: u16, v: serde_json::Value) -> Reply {
        Reply {
            status,
            content_type: "application/json",
            body: v.to_string().into_bytes(),
        }
    }

    fn error(status: u16, message: &str) -> Reply {
        Reply::json(status, json!({ "error": message }))
    }
}

fn parse_since(query: Option<&str>) -> Result<Option<u64>, String> {
    let Some(q) = query else { return Ok(None) };
    let mut since = None;
    for pair in q.split('&').filter(|p| !p.is_empty()) {
        match pair.split_once('=') {
            Some(("since", v)) => {
                since = Some(
                    v.parse::<u64>()
                        .map_err(|_| format!("since must be a non-negative integer, got {v:?}"))?,
                )
            }
            _ => return Err(format!("unexpected query parameter {pair:?}")),
        }
    }
    Ok(since)
}

/// Answers one request without touching the network.
pub fn route(shared: &Shared, method: &str, url: &str) -> Reply {
    if method != "GET" {
        return Reply::error(405, "only GET is supported");
    }
    let (path, query) = match url.split_once('?') {
        Some((p, q)) => (p, Some(q)),
        None => (url, None),
    };
    match path {
        "/health" => {
            let status = match shared.state() {
                RunState::Running => "ok",
                RunState::Starting => "starting",
                RunState::Draining => "draining",
                RunState::Stopped => "stopped",
            };
            Reply::json(200, json!({ "status": status }))
        }
        "/stats" => Reply::json(
            200,
            serde_json::to_value(shared.stats.snapshot()).expect("serializable"),
        ),
        "/events" => match parse_since(query) {
            Ok(since) => Reply::json(
                200,
                serde_json::to_value(shared.events_since(since)).expect("serializable"),
            ),
            Err(m) => Reply::error(400, &m),
        },
        "/frame/latest" => match shared.latest() {
            None => Reply {
                status: 204,
                content_type: "image/x-portable-pixmap",
                body: Vec::new(),
            },
            Some(l) => Reply {
                status: 200,
                content_type: "image/x-portable-pixmap",
                body: write_pnm(&annotate(&l.frame, &l.detections)),
            },
        },
        _ => Reply::error(404, "not found"),
    }
}

/// Background HTTP server; stops when dropped or on `shutdown`.
pub struct HttpServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl HttpServer {
    pub fn start(address: &str, shared: Arc<Shared>) -> Result<HttpServer, ServiceError> {
        let server = tiny_http::Server::http(address).map_err(|e| ServiceError::Bind {
            addr: address.to_string(),
            message: e.to_string(),
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| ServiceError::Bind {
                addr: address.to_string(),
                message: "not an IP listener".into(),
            })?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new()
            .name("http".into())
            .spawn(move || {
                while !flag.load(Ordering::Acquire) {
                    let req = match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(r)) => r,
                        Ok(None) => continue,
                        Err(e) => {
                            log::warn!("http accept failed: {e}");
                            continue;
                        }
                    };
                    let reply = route(&shared, req.method().as_str(), req.url());
                    let header = tiny_http::Header::from_bytes(
                        &b"Content-Type"[..],
                        reply.content_type.as_bytes(),
                    )
                    .expect("static header");
                    let resp = tiny_http::Response::from_data(reply.body)
                        .with_status_code(reply.status)
                        .with_chunked_threshold(usize::MAX)
                        .with_header(header);
                    if let Err(e) = req.respond(resp) {
                        log::debug!("http client went away: {e}");
                    }
                }
            })?;
        Ok(HttpServer {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.halt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::BoundingBox;

    #[test]
    fn since_parsing() {
        assert_eq!(parse_since(None), Ok(None));
        assert_eq!(parse_since(Some("since=12")), Ok(Some(12)));
        assert!(parse_since(Some("since=-1")).is_err());
        assert!(parse_since(Some("since=abc")).is_err());
        assert!(parse_since(Some("page=2")).is_err());
    }

    #[test]
    fn annotation_draws_outline() {
        let f = Frame::filled(12, 12, PixelFormat::Gray, 7).unwrap();
        let d = Detection {
            bbox: BoundingBox::new(1, 1, 10, 10).unwrap(),
            label: Label::Debris,
            confidence: 0.5,
            source: "t".into(),
        };
        let a = annotate(&f, &[d]);
        assert_eq!(a.pixel(1, 1), &label_color(Label::Debris));
        assert_eq!(a.pixel(3, 5), &label_color(Label::Debris));
        assert_eq!(a.pixel(4, 5), &[7, 7, 7]);
        assert_eq!(a.pixel(8, 8), &label_color(Label::Debris));
        assert_eq!(a.pixel(0, 0), &[7, 7, 7]);
    }
}
