//! Renders the standard scenario, runs the classical detector with tracking
//! and scores the result against the scenario's ground truth.

use floatwatch::detect::ClassicalDetector;
use floatwatch::eval::{compare_backends, detections_from_events, evaluate, DEFAULT_IOU_THRESHOLD};
use floatwatch::service::{self, AppConfig};
use floatwatch::synth::{render_all, standard_scenario};

fn main() {
    let sc = standard_scenario();
    let rendered = render_all(&sc).unwrap();
    let truths: Vec<_> = rendered.iter().map(|(_, t)| t.clone()).collect();

    let cfg = AppConfig::default();
    let mut reports = Vec::new();
    for threshold in [25u8, 60, 120] {
        let mut cfg = cfg.clone();
        cfg.motion.threshold = threshold;
        let mut det = ClassicalDetector::new(cfg.classical().unwrap()).unwrap();
        let frames = rendered.iter().map(|(f, _)| f.clone());
        let events = service::detect_frames(&mut det, &cfg.tracker, frames).unwrap();
        let dets = detections_from_events(&events, truths.len());
        reports.push((
            format!("threshold {threshold}"),
            evaluate(&dets, &truths, DEFAULT_IOU_THRESHOLD),
        ));
    }
    print!("{}", compare_backends(&reports));
}
