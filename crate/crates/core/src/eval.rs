//! Scoring detections against ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detect::{Detection, DetectionEvent, EventKind, Label};
use crate::imaging::{bbox_iou, BoundingBox};
use crate::synth::TruthEntry;

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub det: usize,
    pub truth: usize,
    pub iou: f64,
}

/// One frame's matching. Indices refer to the inputs of the match call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_dets: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
}

/// Greedy one-to-one matching: all pairs with IoU at or above the threshold
/// (and above zero), taken in descending IoU order, ties by detection index
/// then truth index.
pub fn match_boxes(
    dets: &[BoundingBox],
    truths: &[BoundingBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut cand = Vec::new();
    for (d, db) in dets.iter().enumerate() {
        for (t, tb) in truths.iter().enumerate() {
            let iou = bbox_iou(db, tb);
            if iou > 0.0 && iou >= iou_threshold {
                cand.push(MatchPair {
                    det: d,
                    truth: t,
                    iou,
                });
            }
        }
    }
    cand.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.det.cmp(&b.det))
            .then(a.truth.cmp(&b.truth))
    });
    let mut det_used = vec![false; dets.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for p in cand {
        if !det_used[p.det] && !truth_used[p.truth] {
            det_used[p.det] = true;
            truth_used[p.truth] = true;
            pairs.push(p);
        }
    }
    MatchResult {
        pairs,
        unmatched_dets: (0..dets.len()).filter(|&i| !det_used[i]).collect(),
        unmatched_truths: (0..truths.len()).filter(|&i| !truth_used[i]).collect(),
    }
}

pub fn match_detections(
    dets: &[Detection],
    truths: &[TruthEntry],
    iou_threshold: f64,
) -> MatchResult {
    let d: Vec<BoundingBox> = dets.iter().map(|d| d.bbox).collect();
    let t: Vec<BoundingBox> = truths.iter().map(|t| t.bbox).collect();
    match_boxes(&d, &t, iou_threshold)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub detections: u64,
    pub truths: u64,
    /// Box matches whose detection and truth labels are both this class.
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub report_version: u32,
    pub frames: u64,
    pub iou_threshold: f64,
    pub detections: u64,
    pub truths: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub miss_rate: f64,
    /// Box matches whose labels also agree.
    pub class_correct_tp: u64,
    pub per_class: BTreeMap<Label, ClassCounts>,
    /// Detection confidences in ten equal bins over [0, 1]; 1.0 lands in
    /// the last bin.
    pub confidence_histogram: [u64; 10],
    /// Mean IoU over matched pairs; `None` without matches.
    pub mean_iou: Option<f64>,
    /// Frames per second of the run that produced the detections, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_fps: Option<f64>,
}

pub fn confidence_bin(c: f64) -> usize {
    ((c.clamp(0.0, 1.0) * 10.0).floor() as usize).min(9)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregates per-frame results. `results[i]` must come from matching
/// `dets[i]` against `truths[i]`.
pub fn compute_metrics(
    results: &[MatchResult],
    dets: &[Vec<Detection>],
    truths: &[Vec<TruthEntry>],
    iou_threshold: f64,
) -> MetricsReport {
    assert_eq!(results.len(), dets.len(), "one detection list per result");
    assert_eq!(results.len(), truths.len(), "one truth list per result");
    let mut per_class: BTreeMap<Label, ClassCounts> = Label::ALL
        .iter()
        .map(|&l| (l, ClassCounts::default()))
        .collect();
    let mut hist = [0u64; 10];
    let (mut n_det, mut n_truth, mut tp, mut class_tp) = (0u64, 0u64, 0u64, 0u64);
    let mut iou_sum = 0.0;

    for ((r, ds), ts) in results.iter().zip(dets).zip(truths) {
        n_det += ds.len() as u64;
        n_truth += ts.len() as u64;
        for d in ds {
            hist[confidence_bin(d.confidence)] += 1;
            per_class.get_mut(&d.label).expect("all labels").detections += 1;
        }
        for t in ts {
            per_class.get_mut(&t.label).expect("all labels").truths += 1;
        }
        for p in &r.pairs {
            tp += 1;
            iou_sum += p.iou;
            let label = ds[p.det].label;
            if label == ts[p.truth].label {
                class_tp += 1;
                per_class.get_mut(&label).expect("all labels").tp += 1;
            }
        }
    }
    for c in per_class.values_mut() {
        c.fp = c.detections - c.tp;
        c.fn_ = c.truths - c.tp;
    }
    let recall = ratio(tp, n_truth);
    MetricsReport {
        report_version: REPORT_VERSION,
        frames: results.len() as u64,
        iou_threshold,
        detections: n_det,
        truths: n_truth,
        tp,
        fp: n_det - tp,
        fn_: n_truth - tp,
        precision: ratio(tp, n_det),
        recall,
        miss_rate: 1.0 - recall,
        class_correct_tp: class_tp,
        per_class,
        confidence_histogram: hist,
        mean_iou: (tp > 0).then(|| iou_sum / tp as f64),
        throughput_fps: None,
    }
}

/// Matches and scores frame-aligned detection and truth lists.
pub fn evaluate(
    dets: &[Vec<Detection>],
    truths: &[Vec<TruthEntry>],
    iou_threshold: f64,
) -> MetricsReport {
    let n = dets.len().max(truths.len());
    let empty_d = Vec::new();
    let empty_t = Vec::new();
    let ds: Vec<Vec<Detection>> = (0..n)
        .map(|i| dets.get(i).unwrap_or(&empty_d).clone())
        .collect();
    let ts: Vec<Vec<TruthEntry>> = (0..n)
        .map(|i| truths.get(i).unwrap_or(&empty_t).clone())
        .collect();
    let results: Vec<MatchResult> = ds
        .iter()
        .zip(&ts)
        .map(|(d, t)| match_detections(d, t, iou_threshold))
        .collect();
    compute_metrics(&results, &ds, &ts, iou_threshold)
}

/// Per-frame detections reported by an event log: one per `appeared` or
/// `updated` event. `exited` events carry no new observation.
pub fn detections_from_events(
    events: &[DetectionEvent],
    frame_count: usize,
) -> Vec<Vec<Detection>> {
    let observed = || events.iter().filter(|e| e.kind != EventKind::Exited);
    let n = observed()
        .map(|e| e.seq as usize + 1)
        .max()
        .unwrap_or(0)
        .max(frame_count);
    let mut frames = vec![Vec::new(); n];
    for e in observed() {
        frames[e.seq as usize].push(Detection {
            bbox: e.bbox,
            label: e.label,
            confidence: e.confidence,
            source: "events".to_string(),
        });
    }
    frames
}

/// Fixed-width comparison table, one row per report in the given order.
pub fn compare_backends(reports: &[(String, MetricsReport)]) -> String {
    let name_w = reports
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("backend".len());
    let mut out = String::new();
    writeln!(
        out,
        "{:<name_w$}  {:>9}  {:>9}  {:>9}  {:>8}  {:>8}",
        "backend", "precision", "recall", "miss_rate", "mean_iou", "fps"
    )
    .expect("string write");
    for (name, r) in reports {
        let iou = r.mean_iou.map_or("-".to_string(), |v| format!("{v:.4}"));
        let fps = r
            .throughput_fps
            .map_or("-".to_string(), |v| format!("{v:.1}"));
        writeln!(
            out,
            "{name:<name_w$}  {:>9.4}  {:>9.4}  {:>9.4}  {iou:>8}  {fps:>8}",
            r.precision, r.recall, r.miss_rate
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BoundingBox, label: Label, confidence: f64) -> Detection {
        Detection {
            bbox: b,
            label,
            confidence,
            source: "t".into(),
        }
    }

    fn truth(b: BoundingBox, label: Label) -> TruthEntry {
        TruthEntry {
            seq: 0,
            id: 1,
            label,
            bbox: b,
        }
    }

    #[test]
    fn empty_is_vacuous_success() {
        let r = evaluate(&[vec![]], &[vec![]], 0.5);
        assert_eq!((r.precision, r.recall, r.miss_rate), (1.0, 1.0, 0.0));
        assert_eq!(r.mean_iou, None);
        assert_eq!(r.frames, 1);
    }

    #[test]
    fn identical_box_matches_fully() {
        let m = match_boxes(&[bx(1, 1, 4, 4)], &[bx(1, 1, 4, 4)], 0.5);
        assert_eq!(
            m.pairs,
            vec![MatchPair {
                det: 0,
                truth: 0,
                iou: 1.0
            }]
        );
        assert!(m.unmatched_dets.is_empty() && m.unmatched_truths.is_empty());
    }

    #[test]
    fn eight_two_two() {
        // 10 frames: 8 with a hit, 2 with a miss plus a stray detection.
        let mut dets = Vec::new();
        let mut truths = Vec::new();
        for i in 0..10 {
            truths.push(vec![truth(bx(0, 0, 10, 10), Label::Debris)]);
            if i < 8 {
                dets.push(vec![det(bx(0, 0, 10, 10), Label::Debris, 0.8)]);
            } else {
                dets.push(vec![det(bx(50, 50, 5, 5), Label::Unknown, 0.2)]);
            }
        }
        let r = evaluate(&dets, &truths, 0.5);
        assert_eq!((r.tp, r.fp, r.fn_), (8, 2, 2));
        assert!((r.precision - 0.8).abs() < 1e-15);
        assert!((r.recall - 0.8).abs() < 1e-15);
        assert!((r.miss_rate - 0.2).abs() < 1e-15);
        assert_eq!(r.per_class[&Label::Debris].tp, 8);
        assert_eq!(r.per_class[&Label::Unknown].fp, 2);
        assert_eq!(r.confidence_histogram[8], 8);
        assert_eq!(r.confidence_histogram[2], 2);
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(confidence_bin(0.0), 0);
        assert_eq!(confidence_bin(0.75), 7);
        assert_eq!(confidence_bin(0.7), 7);
        assert_eq!(confidence_bin(0.9), 9);
        assert_eq!(confidence_bin(1.0), 9);
        assert_eq!(confidence_bin(0.099), 0);
    }

    #[test]
    fn below_threshold_never_matches() {
        // IoU 1/3
        let m = match_boxes(&[bx(0, 0, 2, 1)], &[bx(1, 0, 2, 1)], 0.5);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_dets, vec![0]);
        assert_eq!(
            match_boxes(&[bx(0, 0, 2, 1)], &[bx(1, 0, 2, 1)], 0.3)
                .pairs
                .len(),
            1
        );
    }

    #[test]
    fn events_to_detections_skip_exits() {
        let e = |kind, seq| DetectionEvent {
            kind,
            track_id: 1,
            seq,
            timestamp_us: 0,
            bbox: bx(0, 0, 2, 2),
            label: Label::Vessel,
            confidence: 0.9,
        };
        let frames =
            detections_from_events(&[e(EventKind::Appeared, 1), e(EventKind::Exited, 3)], 5);
        assert_eq!(frames.len(), 5);
        assert_eq!(
            frames.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![0, 1, 0, 0, 0]
        );
    }

    #[test]
    fn table_rows_in_order() {
        let r = evaluate(&[vec![]], &[vec![]], 0.5);
        let t = compare_backends(&[("a".into(), r.clone()), ("bb".into(), r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("backend"));
        let cols = |l: &str| {
            l.split_whitespace()
                .skip(1)
                .map(String::from)
                .collect::<Vec<_>>()
        };
        assert_eq!(cols(lines[1]), cols(lines[2]));
    }

    #[test]
    fn report_json_is_versioned() {
        let r = evaluate(&[vec![]], &[vec![]], 0.5);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["report_version"], 1);
        assert_eq!(v["per_class"]["vessel"]["fn"], 0);
        let back: MetricsReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
