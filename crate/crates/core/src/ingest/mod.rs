//! Frame sources: PGM/PPM directories, Y4M files and FWP over TCP.

pub mod fwp;
mod pnm;
mod queue;
pub mod y4m;

pub use fwp::ProtocolError;
pub use pnm::{parse_pnm, write_pnm};
pub use queue::DropOldestQueue;
pub use y4m::{Y4mReader, Y4mWriter};

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{Frame, PixelFormat};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source not found: {0}")]
    NotFound(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailed { addr: String, source: io::Error },
    #[error("cannot connect to {addr}: {source}")]
    ConnectFailed { addr: String, source: io::Error },
    #[error("unrecognized format: {0}")]
    FormatUnrecognized(String),
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: u64, message: String },
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("frame shape changed from {expected:?} to {actual:?}")]
    ShapeChanged {
        expected: (u32, u32, PixelFormat),
        actual: (u32, u32, PixelFormat),
    },
    #[error("invalid source spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<fwp::WireError> for IngestError {
    fn from(e: fwp::WireError) -> Self {
        match e {
            fwp::WireError::Protocol(p) => IngestError::Protocol(p),
            fwp::WireError::Io(io) => IngestError::Io(io),
        }
    }
}

/// Where frames come from. Each variant carries exactly its own location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceKind {
    /// Directory of `.pgm`/`.ppm`/`.pnm` files, read in byte order of name.
    Dir(PathBuf),
    Y4m(PathBuf),
    /// Accept FWP producers on this address, one at a time.
    TcpListen(String),
    /// Connect to an FWP producer.
    TcpConnect(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceConfig", into = "SourceConfig")]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Frame rate used to synthesize timestamps for file sources.
    pub fps: Option<f64>,
}

/// The `[source]` config table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl TryFrom<SourceConfig> for SourceSpec {
    type Error = IngestError;

    fn try_from(c: SourceConfig) -> Result<Self, IngestError> {
        let mut spec = SourceSpec::parse(&c.uri)?;
        if let Some(fps) = c.fps {
            spec = spec.with_fps(fps)?;
        }
        Ok(spec)
    }
}

impl From<SourceSpec> for SourceConfig {
    fn from(s: SourceSpec) -> Self {
        SourceConfig {
            uri: s.uri(),
            fps: s.fps,
        }
    }
}

impl SourceSpec {
    /// Parses `dir:PATH`, `y4m:PATH`, `tcp-listen:[HOST:]PORT` or
    /// `tcp-connect:HOST:PORT`. A bare path is a Y4M file if it ends in
    /// `.y4m`, otherwise a directory.
    pub fn parse(uri: &str) -> Result<SourceSpec, IngestError> {
        let kind = match uri.split_once(':') {
            Some(("dir", p)) => SourceKind::Dir(nonempty_path(p)?),
            Some(("y4m", p)) => SourceKind::Y4m(nonempty_path(p)?),
            Some(("tcp-listen", a)) => {
                let addr = if a.parse::<u16>().is_ok() {
                    format!("0.0.0.0:{a}")
                } else {
                    a.to_string()
                };
                check_addr(&addr)?;
                SourceKind::TcpListen(addr)
            }
            Some(("tcp-connect", a)) => {
                check_addr(a)?;
                SourceKind::TcpConnect(a.to_string())
            }
            _ if uri.is_empty() => return Err(IngestError::BadSpec("empty source".into())),
            _ if uri.to_ascii_lowercase().ends_with(".y4m") => SourceKind::Y4m(uri.into()),
            _ => SourceKind::Dir(uri.into()),
        };
        Ok(SourceSpec { kind, fps: None })
    }

    pub fn with_fps(mut self, fps: f64) -> Result<SourceSpec, IngestError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(IngestError::BadSpec(format!(
                "fps must be positive, got {fps}"
            )));
        }
        self.fps = Some(fps);
        Ok(self)
    }

    pub fn uri(&self) -> String {
        match &self.kind {
            SourceKind::Dir(p) => format!("dir:{}", p.display()),
            SourceKind::Y4m(p) => format!("y4m:{}", p.display()),
            SourceKind::TcpListen(a) => format!("tcp-listen:{a}"),
            SourceKind::TcpConnect(a) => format!("tcp-connect:{a}"),
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(
            self.kind,
            SourceKind::TcpListen(_) | SourceKind::TcpConnect(_)
        )
    }
}

fn nonempty_path(p: &str) -> Result<PathBuf, IngestError> {
    if p.is_empty() {
        return Err(IngestError::BadSpec("empty path".into()));
    }
    Ok(PathBuf::from(p))
}

fn check_addr(a: &str) -> Result<(), IngestError> {
    match a.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(()),
        _ => Err(IngestError::BadSpec(format!(
            "expected HOST:PORT, got {a:?}"
        ))),
    }
}

const POLL: Duration = Duration::from_millis(50);

/// A stream whose blocking reads give up once `cancel` is set.
struct Cancellable {
    stream: TcpStream,
    cancel: Arc<AtomicBool>,
}

impl Read for Cancellable {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        loop {
            match self.stream.read(buf) {
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    if self.cancel.load(Ordering::Relaxed) {
                        return Err(io::Error::new(
                            io::ErrorKind::ConnectionAborted,
                            "cancelled",
                        ));
                    }
                }
                r => return r,
            }
        }
    }
}

impl Cancellable {
    fn new(stream: TcpStream, cancel: Arc<AtomicBool>) -> io::Result<Self> {
        stream.set_nonblocking(false)?;
        stream.set_read_timeout(Some(POLL))?;
        stream.set_nodelay(true)?;
        Ok(Cancellable { stream, cancel })
    }
}

enum Inner {
    Dir {
        files: Vec<PathBuf>,
        next: usize,
    },
    Y4m(Box<Y4mReader<BufReader<File>>>),
    Listen {
        listener: TcpListener,
        conn: Option<BufReader<Cancellable>>,
    },
    Connect {
        conn: Option<BufReader<Cancellable>>,
    },
}

/// A single-consumer stream of frames with gap-free `seq` numbering.
pub struct FrameSource {
    spec: SourceSpec,
    inner: Inner,
    delivered: u64,
    shape: Option<(u32, u32, PixelFormat)>,
    ended: bool,
    cancel: Arc<AtomicBool>,
}

pub fn open_source(spec: &SourceSpec) -> Result<FrameSource, IngestError> {
    FrameSource::open(spec)
}

impl FrameSource {
    pub fn open(spec: &SourceSpec) -> Result<FrameSource, IngestError> {
        let cancel = Arc::new(AtomicBool::new(false));
        let inner = match &spec.kind {
            SourceKind::Dir(path) => Inner::Dir {
                files: list_images(path)?,
                next: 0,
            },
            SourceKind::Y4m(path) => {
                let file = File::open(path).map_err(|e| not_found(path, e))?;
                Inner::Y4m(Box::new(Y4mReader::new(BufReader::new(file), spec.fps)?))
            }
            SourceKind::TcpListen(addr) => {
                let listener =
                    TcpListener::bind(addr).map_err(|source| IngestError::BindFailed {
                        addr: addr.clone(),
                        source,
                    })?;
                listener.set_nonblocking(true)?;
                Inner::Listen {
                    listener,
                    conn: None,
                }
            }
            SourceKind::TcpConnect(addr) => {
                let stream = connect(addr)?;
                Inner::Connect {
                    conn: Some(BufReader::new(Cancellable::new(stream, cancel.clone())?)),
                }
            }
        };
        Ok(FrameSource {
            spec: spec.clone(),
            inner,
            delivered: 0,
            shape: None,
            ended: false,
            cancel,
        })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn frames_delivered(&self) -> u64 {
        self.delivered
    }

    /// Dims and format, fixed by the first delivered frame.
    pub fn shape(&self) -> Option<(u32, u32, PixelFormat)> {
        self.shape
    }

    /// The bound address of a `tcp-listen` source.
    pub fn local_addr(&self) -> Option<std::net::SocketAddr> {
        match &self.inner {
            Inner::Listen { listener, .. } => listener.local_addr().ok(),
            _ => None,
        }
    }

    /// Flag that makes blocking reads end the stream when set.
    pub fn cancel_handle(&self) -> Arc<AtomicBool> {
        self.cancel.clone()
    }

    fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    /// The next frame, or `None` once the stream has ended. After `None`,
    /// every later call also returns `None`.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, IngestError> {
        if self.ended {
            return Ok(None);
        }
        let raw = match self.read_raw() {
            Ok(Some(f)) => f,
            Ok(None) => {
                self.ended = true;
                return Ok(None);
            }
            Err(_) if self.cancelled() => {
                self.ended = true;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let actual = (raw.width(), raw.height(), raw.format());
        match self.shape {
            Some(expected) if expected != actual => {
                return Err(IngestError::ShapeChanged { expected, actual });
            }
            _ => self.shape = Some(actual),
        }
        let seq = self.delivered;
        self.delivered += 1;
        let ts = match self.inner {
            Inner::Dir { .. } => synthetic_ts(seq, self.spec.fps.unwrap_or(30.0)),
            _ => raw.timestamp_us(),
        };
        Ok(Some(raw.with_timing(seq, ts)))
    }

    fn read_raw(&mut self) -> Result<Option<Frame>, IngestError> {
        let cancel = self.cancel.clone();
        match &mut self.inner {
            Inner::Dir { files, next } => {
                let Some(path) = files.get(*next) else {
                    return Ok(None);
                };
                *next += 1;
                let bytes = std::fs::read(path).map_err(|e| not_found(path, e))?;
                parse_pnm(&bytes)
            }
            .map(Some),
            Inner::Y4m(r) => r.next_frame(),
            Inner::Connect { conn } => {
                let Some(stream) = conn else {
                    return Ok(None);
                };
                let result = fwp::read_frame(stream).map_err(IngestError::from);
                if !matches!(result, Ok(Some(_))) {
                    *conn = None;
                }
                result
            }
            Inner::Listen { listener, conn } => loop {
                if cancel.load(Ordering::Relaxed) {
                    return Ok(None);
                }
                let Some(stream) = conn else {
                    match listener.accept() {
                        Ok((s, peer)) => {
                            log::info!("frame producer connected from {peer}");
                            *conn = Some(BufReader::new(Cancellable::new(s, cancel.clone())?));
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
                        Err(e) => return Err(e.into()),
                    }
                    continue;
                };
                match fwp::read_frame(stream) {
                    Ok(Some(f)) => return Ok(Some(f)),
                    Ok(None) => {
                        log::info!("frame producer disconnected");
                        *conn = None;
                    }
                    Err(e) => {
                        *conn = None;
                        return Err(e.into());
                    }
                }
            },
        }
    }
}

impl Iterator for FrameSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// Timestamp of frame `seq` in a stream running at `fps`, in microseconds.
pub fn synthetic_ts(seq: u64, fps: f64) -> u64 {
    (seq as f64 * 1e6 / fps).round() as u64
}

fn not_found(path: &Path, e: io::Error) -> IngestError {
    if e.kind() == io::ErrorKind::NotFound {
        IngestError::NotFound(path.display().to_string())
    } else {
        IngestError::Io(e)
    }
}

fn connect(addr: &str) -> Result<TcpStream, IngestError> {
    let failed = |source| IngestError::ConnectFailed {
        addr: addr.to_string(),
        source,
    };
    let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses resolved");
    for a in addr.to_socket_addrs().map_err(failed)? {
        match TcpStream::connect_timeout(&a, Duration::from_secs(2)) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(failed(last))
}

/// Image files in `dir`, sorted by the bytes of their file names.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| not_found(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| {
        a.file_name()
            .unwrap_or_default()
            .as_encoded_bytes()
            .cmp(b.file_name().unwrap_or_default().as_encoded_bytes())
    });
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!(
            SourceSpec::parse("dir:/tmp/x").unwrap().kind,
            SourceKind::Dir("/tmp/x".into())
        );
        assert_eq!(
            SourceSpec::parse("clip.Y4M").unwrap().kind,
            SourceKind::Y4m("clip.Y4M".into())
        );
        assert_eq!(
            SourceSpec::parse("tcp-listen:9000").unwrap().kind,
            SourceKind::TcpListen("0.0.0.0:9000".into())
        );
        assert_eq!(
            SourceSpec::parse("tcp-connect:cam.local:7000")
                .unwrap()
                .kind,
            SourceKind::TcpConnect("cam.local:7000".into())
        );
        assert!(SourceSpec::parse("tcp-connect:7000").is_err());
        assert!(SourceSpec::parse("dir:").is_err());
        assert!(SourceSpec::parse("y4m:a.y4m")
            .unwrap()
            .with_fps(0.0)
            .is_err());
        let s = SourceSpec::parse("y4m:a.y4m").unwrap();
        assert_eq!(SourceSpec::parse(&s.uri()).unwrap(), s);
    }

    #[test]
    fn missing_dir_is_not_found() {
        let spec = SourceSpec::parse("dir:/definitely/not/here").unwrap();
        assert!(matches!(open_source(&spec), Err(IngestError::NotFound(_))));
    }

    #[test]
    fn closed_port_is_connect_failed() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let spec = SourceSpec::parse(&format!("tcp-connect:127.0.0.1:{port}")).unwrap();
        assert!(matches!(
            open_source(&spec),
            Err(IngestError::ConnectFailed { .. })
        ));
    }

    #[test]
    fn synthetic_timestamps() {
        assert_eq!(synthetic_ts(0, 30.0), 0);
        assert_eq!(synthetic_ts(3, 30.0), 100_000);
        assert_eq!(synthetic_ts(1, 25.0), 40_000);
    }
}
