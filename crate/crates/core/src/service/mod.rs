//! Application assembly: configuration, the threaded pipeline, the HTTP API
//! and the external-backend client.

mod config;
pub mod external;
pub mod http;
mod pipeline;

pub use config::{AppConfig, BackendKind, DetectorConfig, HttpConfig};
pub use external::{serve_backend, ExternalBackend};
pub use http::{annotate, HttpServer};
pub use pipeline::{
    LatestFrame, Pipeline, PipelineOptions, PipelineStats, RunState, RunSummary, Shared,
    StatsSnapshot, EVENT_RING_CAPACITY,
};

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::detect::{
    backend_detect, ClassicalDetector, DetectError, DetectionEvent, DetectorBackend, Tracker,
    TrackerConfig,
};
use crate::imaging::{to_grayscale, Frame};
use crate::ingest::{FrameSource, IngestError};
use crate::synth::{self, Scenario, SynthError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot bind HTTP server to {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error(transparent)]
    Source(#[from] IngestError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("a pipeline stage panicked")]
    StagePanicked,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn build_backend(cfg: &AppConfig) -> Result<Box<dyn DetectorBackend>, ServiceError> {
    Ok(match cfg.detector.backend {
        BackendKind::Classical => Box::new(ClassicalDetector::new(cfg.classical()?)?),
        BackendKind::External => {
            let addr = cfg.detector.external_address.as_deref().ok_or_else(|| {
                ServiceError::Config("detector.external_address is not set".into())
            })?;
            Box::new(ExternalBackend::new(
                addr,
                Duration::from_millis(cfg.detector.timeout_ms),
            ))
        }
    })
}

/// Opens the configured source and starts the threaded pipeline. Live
/// sources drop the oldest queued frame under load; file sources wait.
pub fn start_pipeline(
    cfg: &AppConfig,
    event_sink: Option<Box<dyn Write + Send>>,
) -> Result<Pipeline, ServiceError> {
    cfg.validate()?;
    let spec = cfg
        .source
        .as_ref()
        .ok_or_else(|| ServiceError::Config("no source configured".into()))?;
    let backend = build_backend(cfg)?;
    let source = FrameSource::open(spec)?;
    Pipeline::start(
        source,
        backend,
        PipelineOptions {
            queue_capacity: cfg.queue_capacity,
            source_retries: cfg.source_retries,
            tracker: cfg.tracker.clone(),
            drop_oldest: spec.is_live(),
            event_sink,
        },
    )
}

/// Runs the pipeline until the source ends.
pub fn run_pipeline(
    cfg: &AppConfig,
    event_sink: Option<Box<dyn Write + Send>>,
) -> Result<RunSummary, ServiceError> {
    start_pipeline(cfg, event_sink)?.wait()
}

/// Single-threaded equivalent of the pipeline for in-memory frames: same
/// detection, tracking and end-of-stream events.
pub fn detect_frames<I>(
    backend: &mut dyn DetectorBackend,
    tracker: &TrackerConfig,
    frames: I,
) -> Result<Vec<DetectionEvent>, DetectError>
where
    I: IntoIterator<Item = Frame>,
{
    let mut tracker = Tracker::new(tracker.clone());
    let mut events = Vec::new();
    let mut last = None;
    for frame in frames {
        let dets = backend_detect(backend, &frame)?;
        events.extend(tracker.update(&dets, frame.seq(), frame.timestamp_us()));
        last = Some((frame.seq(), frame.timestamp_us()));
    }
    if let Some((seq, ts)) = last {
        events.extend(tracker.finish(seq + 1, ts));
    }
    Ok(events)
}

/// Writes events as JSON lines.
pub fn write_events<W: Write>(out: &mut W, events: &[DetectionEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut *out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: std::io::BufRead>(r: R) -> Result<Vec<DetectionEvent>, ServiceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ServiceError::Config(format!("event log line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// The standard scene scaled to `width` x `height`, lasting `frames`.
pub fn bench_scenario(width: u32, height: u32, frames: u32) -> Scenario {
    let base = synth::standard_scenario();
    let (sx, sy) = (
        width as f64 / base.width as f64,
        height as f64 / base.height as f64,
    );
    let mut sc = Scenario {
        width,
        height,
        frame_count: frames,
        ..base.clone()
    };
    for o in &mut sc.objects {
        o.size = [
            (o.size[0] as f64 * sx).round().max(1.0) as u32,
            (o.size[1] as f64 * sy).round().max(1.0) as u32,
        ];
        o.start = [o.start[0] * sx, o.start[1] * sy];
        o.velocity = [o.velocity[0] * sx, o.velocity[1] * sy];
        o.enter_frame = 0;
        o.exit_frame = u32::MAX;
    }
    sc
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub width: u32,
    pub height: u32,
    pub frames: u64,
    pub events: u64,
    /// Time spent in detection and tracking only.
    pub detect_seconds: f64,
    pub fps: f64,
}

/// Measures classical detection and tracking throughput on grayscale
/// synthetic frames. Rendering is excluded from the timing.
pub fn bench(
    cfg: &AppConfig,
    width: u32,
    height: u32,
    frames: u32,
) -> Result<BenchReport, ServiceError> {
    let sc = bench_scenario(width, height, frames);
    let mut detector = ClassicalDetector::new(cfg.classical()?)?;
    let mut tracker = Tracker::new(cfg.tracker.clone());
    let mut busy = Duration::ZERO;
    let mut events = 0u64;
    for t in 0..frames {
        let (rgb, _) = synth::render_frame(&sc, t)?;
        let gray = to_grayscale(&rgb).expect("rgb frame");
        let t0 = Instant::now();
        let dets = backend_detect(&mut detector, &gray)?;
        events += tracker.update(&dets, gray.seq(), gray.timestamp_us()).len() as u64;
        busy += t0.elapsed();
    }
    let secs = busy.as_secs_f64();
    Ok(BenchReport {
        width,
        height,
        frames: frames as u64,
        events,
        detect_seconds: secs,
        fps: if secs > 0.0 {
            frames as f64 / secs
        } else {
            f64::INFINITY
        },
    })
}
