use std::collections::VecDeque;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::ServiceError;
use crate::detect::{
    backend_detect, Detection, DetectionEvent, DetectorBackend, Tracker, TrackerConfig,
};
use crate::imaging::Frame;
use crate::ingest::{DropOldestQueue, FrameSource};

/// Events kept for `/events`.
pub const EVENT_RING_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Starting,
    Running,
    /// Stop requested or input exhausted; stages are winding down.
    Draining,
    Stopped,
}

impl RunState {
    fn from_u8(v: u8) -> RunState {
        match v {
            0 => RunState::Starting,
            1 => RunState::Running,
            2 => RunState::Draining,
            _ => RunState::Stopped,
        }
    }
}

#[derive(Default)]
struct Latency {
    total_us: AtomicU64,
    count: AtomicU64,
}

impl Latency {
    fn record(&self, d: Duration) {
        self.total_us
            .fetch_add(d.as_micros() as u64, Ordering::Relaxed);
        self.count.fetch_add(1, Ordering::Relaxed);
    }

    fn mean(&self) -> f64 {
        let n = self.count.load(Ordering::Relaxed);
        if n == 0 {
            0.0
        } else {
            self.total_us.load(Ordering::Relaxed) as f64 / n as f64
        }
    }
}

/// Monotone counters shared with the HTTP layer.
#[derive(Default)]
pub struct PipelineStats {
    ingested: AtomicU64,
    processed: AtomicU64,
    dropped: AtomicU64,
    events: AtomicU64,
    detect_errors: AtomicU64,
    source_errors: AtomicU64,
    ingest_latency: Latency,
    detect_latency: Latency,
    publish_latency: Latency,
    recent: Mutex<VecDeque<Instant>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageLatency {
    pub ingest_us: f64,
    pub detect_us: f64,
    pub publish_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsSnapshot {
    pub frames_ingested: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub events_emitted: u64,
    pub detect_errors: u64,
    pub source_errors: u64,
    /// Frames processed during the last second.
    pub fps: f64,
    pub mean_latency: StageLatency,
}

impl PipelineStats {
    fn mark_processed(&self) {
        let now = Instant::now();
        let mut recent = self.recent.lock().unwrap_or_else(|p| p.into_inner());
        recent.push_back(now);
        while recent
            .front()
            .is_some_and(|t| now.duration_since(*t) > Duration::from_secs(1))
        {
            recent.pop_front();
        }
        self.processed.fetch_add(1, Ordering::AcqRel);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let fps = {
            let recent = self.recent.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            recent
                .iter()
                .filter(|t| now.duration_since(**t) <= Duration::from_secs(1))
                .count() as f64
        };
        // Read `processed` and `dropped` before `ingested` so the snapshot
        // never shows more handled frames than ingested ones.
        let frames_processed = self.processed.load(Ordering::Acquire);
        let frames_dropped = self.dropped.load(Ordering::Acquire);
        StatsSnapshot {
            frames_ingested: self.ingested.load(Ordering::Acquire),
            frames_processed,
            frames_dropped,
            events_emitted: self.events.load(Ordering::Relaxed),
            detect_errors: self.detect_errors.load(Ordering::Relaxed),
            source_errors: self.source_errors.load(Ordering::Relaxed),
            fps,
            mean_latency: StageLatency {
                ingest_us: self.ingest_latency.mean(),
                detect_us: self.detect_latency.mean(),
                publish_us: self.publish_latency.mean(),
            },
        }
    }
}

/// The most recent processed frame and its detections.
#[derive(Debug, Clone)]
pub struct LatestFrame {
    pub frame: Arc<Frame>,
    pub detections: Vec<Detection>,
}

/// State readable while the pipeline runs.
pub struct Shared {
    pub stats: PipelineStats,
    events: Mutex<VecDeque<DetectionEvent>>,
    latest: Mutex<Option<LatestFrame>>,
    state: AtomicU8,
}

impl Shared {
    fn new() -> Self {
        Shared {
            stats: PipelineStats::default(),
            events: Mutex::new(VecDeque::with_capacity(EVENT_RING_CAPACITY)),
            latest: Mutex::new(None),
            state: AtomicU8::new(RunState::Starting as u8),
        }
    }

    pub fn state(&self) -> RunState {
        RunState::from_u8(self.state.load(Ordering::Acquire))
    }

    fn set_state(&self, s: RunState) {
        self.state.store(s as u8, Ordering::Release);
    }

    /// Retained events with frame seq greater than `since` (all when
    /// `None`), oldest first.
    pub fn events_since(&self, since: Option<u64>) -> Vec<DetectionEvent> {
        let ring = self.events.lock().unwrap_or_else(|p| p.into_inner());
        ring.iter()
            .filter(|e| since.is_none_or(|s| e.seq > s))
            .cloned()
            .collect()
    }

    pub fn latest(&self) -> Option<LatestFrame> {
        self.latest
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    /// Appends to the ring unless `stop` is set. The check happens under the
    /// ring lock, which `Pipeline::stop` also takes.
    fn publish(&self, events: &[DetectionEvent], stop: &AtomicBool) -> bool {
        let mut ring = self.events.lock().unwrap_or_else(|p| p.into_inner());
        if stop.load(Ordering::Acquire) {
            return false;
        }
        for e in events {
            if ring.len() == EVENT_RING_CAPACITY {
                ring.pop_front();
            }
            ring.push_back(e.clone());
        }
        self.stats
            .events
            .fetch_add(events.len() as u64, Ordering::Relaxed);
        true
    }
}

struct Processed {
    /// `None` for the end-of-stream batch.
    frame: Option<Arc<Frame>>,
    detections: Vec<Detection>,
    events: Vec<DetectionEvent>,
}

/// Outcome of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub stats: StatsSnapshot,
    pub stopped_early: bool,
    /// The error that ended the input early, if any.
    pub source_failure: Option<String>,
}

pub struct PipelineOptions {
    pub queue_capacity: usize,
    pub source_retries: u32,
    pub tracker: TrackerConfig,
    /// Drop the oldest queued frame when detection falls behind; otherwise
    /// ingest waits.
    pub drop_oldest: bool,
    /// Receives every event as one JSON line.
    pub event_sink: Option<Box<dyn Write + Send>>,
}

/// A running ingest -> detect -> publish pipeline.
pub struct Pipeline {
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    source_cancel: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    failure: Arc<Mutex<Option<String>>>,
    sink_error: Arc<Mutex<Option<std::io::Error>>>,
}

impl Pipeline {
    pub fn start(
        mut source: FrameSource,
        backend: Box<dyn DetectorBackend>,
        opts: PipelineOptions,
    ) -> Result<Pipeline, ServiceError> {
        if opts.queue_capacity == 0 {
            return Err(ServiceError::Config(
                "queue_capacity must be positive".into(),
            ));
        }
        let shared = Arc::new(Shared::new());
        let stop = Arc::new(AtomicBool::new(false));
        let source_cancel = source.cancel_handle();
        let failure = Arc::new(Mutex::new(None));
        let sink_error = Arc::new(Mutex::new(None));
        let frames: Arc<DropOldestQueue<Arc<Frame>>> =
            Arc::new(DropOldestQueue::new(opts.queue_capacity));
        let results: Arc<DropOldestQueue<Processed>> =
            Arc::new(DropOldestQueue::new(opts.queue_capacity));

        let ingest = {
            let (shared, stop, frames, failure) = (
                shared.clone(),
                stop.clone(),
                frames.clone(),
                failure.clone(),
            );
            let (retries, drop_oldest) = (opts.source_retries, opts.drop_oldest);
            std::thread::Builder::new()
                .name("ingest".into())
                .spawn(move || {
                    let mut consecutive = 0u32;
                    while !stop.load(Ordering::Acquire) {
                        let t0 = Instant::now();
                        match source.next_frame() {
                            Ok(Some(frame)) => {
                                consecutive = 0;
                                shared.stats.ingest_latency.record(t0.elapsed());
                                shared.stats.ingested.fetch_add(1, Ordering::AcqRel);
                                let frame = Arc::new(frame);
                                if drop_oldest {
                                    match frames.push(frame) {
                                        Ok(Some(_)) => {
                                            shared.stats.dropped.fetch_add(1, Ordering::AcqRel);
                                        }
                                        Ok(None) => {}
                                        Err(_) => break,
                                    }
                                } else if frames.push_wait(frame).is_err() {
                                    break;
                                }
                            }
                            Ok(None) => break,
                            Err(e) => {
                                shared.stats.source_errors.fetch_add(1, Ordering::Relaxed);
                                consecutive += 1;
                                log::warn!("source error ({consecutive}/{}): {e}", retries + 1);
                                if consecutive > retries {
                                    *failure.lock().unwrap_or_else(|p| p.into_inner()) =
                                        Some(e.to_string());
                                    break;
                                }
                            }
                        }
                    }
                    frames.close();
                    let _ = shared.state.compare_exchange(
                        RunState::Running as u8,
                        RunState::Draining as u8,
                        Ordering::AcqRel,
                        Ordering::Acquire,
                    );
                })?
        };

        let detect = {
            let (shared, stop, frames, results) = (
                shared.clone(),
                stop.clone(),
                frames.clone(),
                results.clone(),
            );
            let tracker_cfg = opts.tracker.clone();
            let mut backend = backend;
            std::thread::Builder::new()
                .name("detect".into())
                .spawn(move || {
                    let mut tracker = Tracker::new(tracker_cfg);
                    let mut last: Option<(u64, u64)> = None;
                    while let Some(frame) = frames.pop() {
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                        let t0 = Instant::now();
                        let detections = match backend_detect(&mut backend, &frame) {
                            Ok(d) => d,
                            Err(e) => {
                                shared.stats.detect_errors.fetch_add(1, Ordering::Relaxed);
                                log::warn!(
                                    "detector {} failed on frame {}: {e}",
                                    backend.name(),
                                    frame.seq()
                                );
                                Vec::new()
                            }
                        };
                        let events = tracker.update(&detections, frame.seq(), frame.timestamp_us());
                        shared.stats.detect_latency.record(t0.elapsed());
                        last = Some((frame.seq(), frame.timestamp_us()));
                        shared.stats.mark_processed();
                        if results
                            .push_wait(Processed {
                                frame: Some(frame),
                                detections,
                                events,
                            })
                            .is_err()
                        {
                            break;
                        }
                    }
                    if !stop.load(Ordering::Acquire) {
                        if let Some((seq, ts)) = last {
                            // One past the last frame, so `since` cursors pick these up.
                            let events = tracker.finish(seq + 1, ts);
                            let _ = results.push_wait(Processed {
                                frame: None,
                                detections: Vec::new(),
                                events,
                            });
                        }
                    }
                    results.close();
                })?
        };

        let publish = {
            let (shared, stop, results, sink_error) = (
                shared.clone(),
                stop.clone(),
                results.clone(),
                sink_error.clone(),
            );
            let mut sink = opts.event_sink;
            std::thread::Builder::new()
                .name("publish".into())
                .spawn(move || {
                    while let Some(p) = results.pop() {
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                        let t0 = Instant::now();
                        if let Some(w) = sink.as_mut() {
                            let written = p.events.iter().try_for_each(|e| {
                                serde_json::to_writer(&mut *w, e)?;
                                w.write_all(b"\n")
                            });
                            if let Err(e) = written {
                                *sink_error.lock().unwrap_or_else(|p| p.into_inner()) = Some(e);
                                sink = None;
                            }
                        }
                        if !shared.publish(&p.events, &stop) {
                            break;
                        }
                        if let Some(frame) = p.frame {
                            *shared.latest.lock().unwrap_or_else(|p| p.into_inner()) =
                                Some(LatestFrame {
                                    frame,
                                    detections: p.detections,
                                });
                        }
                        shared.stats.publish_latency.record(t0.elapsed());
                    }
                    if let Some(w) = sink.as_mut() {
                        if let Err(e) = w.flush() {
                            *sink_error.lock().unwrap_or_else(|p| p.into_inner()) = Some(e);
                        }
                    }
                })?
        };

        shared.set_state(RunState::Running);
        Ok(Pipeline {
            shared,
            stop,
            source_cancel,
            threads: vec![ingest, detect, publish],
            failure,
            sink_error,
        })
    }

    pub fn shared(&self) -> Arc<Shared> {
        self.shared.clone()
    }

    /// Requests shutdown. No events are published after this returns.
    pub fn stop(&self) {
        let _ring = self.shared.events.lock().unwrap_or_else(|p| p.into_inner());
        self.shared.set_state(RunState::Draining);
        self.stop.store(true, Ordering::Release);
        self.source_cancel.store(true, Ordering::Release);
    }

    pub fn is_finished(&self) -> bool {
        self.threads.iter().all(|t| t.is_finished())
    }

    /// Waits for all stages to exit.
    pub fn wait(mut self) -> Result<RunSummary, ServiceError> {
        for t in self.threads.drain(..) {
            t.join().map_err(|_| ServiceError::StagePanicked)?;
        }
        self.shared.set_state(RunState::Stopped);
        if let Some(e) = self
            .sink_error
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .take()
        {
            return Err(ServiceError::Io(e));
        }
        Ok(RunSummary {
            stats: self.shared.stats.snapshot(),
            stopped_early: self.stop.load(Ordering::Acquire),
            source_failure: self
                .failure
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .clone(),
        })
    }
}
