//! Greedy IoU tracker with appearance debouncing.
//!
//! A candidate track becomes public (and gets an id) once it has been matched
//! in `confirm_frames` consecutive frames; a candidate that misses a single
//! frame is discarded silently. Public tracks report `updated` on every
//! matched frame and `exited` after `drop_frames` consecutive misses.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Detection, DetectionEvent, EventKind, Label};
use crate::imaging::{bbox_iou, BoundingBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub confirm_frames: u32,
    pub drop_frames: u32,
    pub assoc_iou: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            confirm_frames: 3,
            drop_frames: 5,
            assoc_iou: 0.3,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.confirm_frames < 1 {
            return Err("confirm_frames must be >= 1".into());
        }
        if self.drop_frames < 1 {
            return Err("drop_frames must be >= 1".into());
        }
        if !(self.assoc_iou > 0.0 && self.assoc_iou <= 1.0) {
            return Err(format!(
                "assoc_iou must be in (0, 1], got {}",
                self.assoc_iou
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Public id; `None` until confirmed.
    pub id: Option<u64>,
    pub last_box: BoundingBox,
    pub hits: u32,
    pub misses: u32,
    pub label: Label,
    pub confidence: f64,
}

impl Track {
    pub fn is_confirmed(&self) -> bool {
        self.id.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_confirmed())
    }

    fn event(t: &Track, kind: EventKind, seq: u64, timestamp_us: u64) -> DetectionEvent {
        DetectionEvent {
            kind,
            track_id: t.id.expect("events only for confirmed tracks"),
            seq,
            timestamp_us,
            bbox: t.last_box,
            label: t.label,
            confidence: t.confidence,
        }
    }

    /// Associates one frame's detections and returns its events, ordered by
    /// track id.
    pub fn update(
        &mut self,
        detections: &[Detection],
        seq: u64,
        timestamp_us: u64,
    ) -> Vec<DetectionEvent> {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            for (di, d) in detections.iter().enumerate() {
                let iou = bbox_iou(&t.last_box, &d.bbox);
                if iou > 0.0 && iou >= self.cfg.assoc_iou {
                    pairs.push((iou, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_match: Vec<Option<usize>> = vec![None; self.tracks.len()];
        let mut det_used = vec![false; detections.len()];
        for (_, ti, di) in pairs {
            if track_match[ti].is_none() && !det_used[di] {
                track_match[ti] = Some(di);
                det_used[di] = true;
            }
        }

        let mut events = Vec::new();
        let mut survivors = Vec::with_capacity(self.tracks.len());
        for (mut t, matched) in std::mem::take(&mut self.tracks)
            .into_iter()
            .zip(track_match)
        {
            match matched {
                Some(di) => {
                    let d = &detections[di];
                    t.last_box = d.bbox;
                    t.label = d.label;
                    t.confidence = d.confidence;
                    t.hits += 1;
                    t.misses = 0;
                    if t.is_confirmed() {
                        events.push(Self::event(&t, EventKind::Updated, seq, timestamp_us));
                    } else if t.hits >= self.cfg.confirm_frames {
                        t.id = Some(self.next_id);
                        self.next_id += 1;
                        events.push(Self::event(&t, EventKind::Appeared, seq, timestamp_us));
                    }
                    survivors.push(t);
                }
                None if !t.is_confirmed() => {}
                None => {
                    t.misses += 1;
                    if t.misses >= self.cfg.drop_frames {
                        events.push(Self::event(&t, EventKind::Exited, seq, timestamp_us));
                    } else {
                        survivors.push(t);
                    }
                }
            }
        }
        self.tracks = survivors;

        for (d, used) in detections.iter().zip(det_used) {
            if used {
                continue;
            }
            let mut t = Track {
                id: None,
                last_box: d.bbox,
                hits: 1,
                misses: 0,
                label: d.label,
                confidence: d.confidence,
            };
            if self.cfg.confirm_frames <= 1 {
                t.id = Some(self.next_id);
                self.next_id += 1;
                events.push(Self::event(&t, EventKind::Appeared, seq, timestamp_us));
            }
            self.tracks.push(t);
        }

        events.sort_by_key(|e| e.track_id);
        events
    }

    /// Closes every public track at end of stream; `seq` is the last frame
    /// processed.
    pub fn finish(&mut self, seq: u64, timestamp_us: u64) -> Vec<DetectionEvent> {
        let mut events: Vec<DetectionEvent> = self
            .confirmed()
            .map(|t| Self::event(t, EventKind::Exited, seq, timestamp_us))
            .collect();
        self.tracks.clear();
        events.sort_by_key(|e| e.track_id);
        events
    }
}

/// Checks that every track's events read `appeared (updated)* exited`, in
/// order and with nothing after `exited`. With `require_closed`, every track
/// must also have exited.
pub fn check_event_grammar(events: &[DetectionEvent], require_closed: bool) -> Result<(), String> {
    #[derive(PartialEq)]
    enum State {
        Open,
        Closed,
    }
    let mut state: HashMap<u64, State> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        let current = state.get(&e.track_id);
        match (current, e.kind) {
            (None, EventKind::Appeared) => {
                state.insert(e.track_id, State::Open);
            }
            (Some(State::Open), EventKind::Updated) => {}
            (Some(State::Open), EventKind::Exited) => {
                state.insert(e.track_id, State::Closed);
            }
            (_, kind) => {
                return Err(format!(
                    "event {i}: unexpected {kind:?} for track {}",
                    e.track_id
                ))
            }
        }
    }
    if require_closed {
        if let Some((id, _)) = state.iter().find(|(_, s)| **s == State::Open) {
            return Err(format!("track {id} never exited"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: u32, y: u32) -> Detection {
        Detection {
            bbox: BoundingBox::new(x, y, 10, 10).unwrap(),
            label: Label::Debris,
            confidence: 0.8,
            source: "test".into(),
        }
    }

    fn kinds(ev: &[DetectionEvent]) -> Vec<(EventKind, u64, u64)> {
        ev.iter().map(|e| (e.kind, e.track_id, e.seq)).collect()
    }

    #[test]
    fn appears_on_third_frame() {
        let mut t = Tracker::new(TrackerConfig::default());
        assert!(t.update(&[det(5, 5)], 0, 0).is_empty());
        assert!(t.update(&[det(5, 5)], 1, 0).is_empty());
        let ev = t.update(&[det(5, 5)], 2, 0);
        assert_eq!(kinds(&ev), vec![(EventKind::Appeared, 1, 2)]);
        let ev = t.update(&[det(6, 5)], 3, 0);
        assert_eq!(kinds(&ev), vec![(EventKind::Updated, 1, 3)]);
    }

    #[test]
    fn single_blip_never_reported() {
        let mut t = Tracker::new(TrackerConfig::default());
        let mut all = t.update(&[det(5, 5)], 0, 0);
        for seq in 1..10 {
            all.extend(t.update(&[], seq, 0));
        }
        all.extend(t.finish(10, 0));
        assert!(all.is_empty());
    }

    #[test]
    fn exits_after_five_misses() {
        let mut t = Tracker::new(TrackerConfig::default());
        for seq in 0..3 {
            t.update(&[det(5, 5)], seq, 0);
        }
        let mut exits = Vec::new();
        for seq in 3..12 {
            exits.extend(t.update(&[], seq, 0));
        }
        assert_eq!(kinds(&exits), vec![(EventKind::Exited, 1, 7)]);
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn missed_frames_then_recovery() {
        let mut t = Tracker::new(TrackerConfig::default());
        for seq in 0..3 {
            t.update(&[det(5, 5)], seq, 0);
        }
        assert!(t.update(&[], 3, 0).is_empty());
        let ev = t.update(&[det(5, 5)], 4, 0);
        assert_eq!(kinds(&ev), vec![(EventKind::Updated, 1, 4)]);
        assert_eq!(t.tracks()[0].misses, 0);
    }

    #[test]
    fn greedy_one_to_one() {
        let mut t = Tracker::new(TrackerConfig {
            confirm_frames: 1,
            ..Default::default()
        });
        t.update(&[det(0, 0), det(30, 0)], 0, 0);
        // Both detections overlap track 1 more than track 2.
        let ev = t.update(&[det(1, 0), det(2, 0)], 1, 0);
        let updated: Vec<_> = ev.iter().filter(|e| e.kind == EventKind::Updated).collect();
        assert_eq!(updated.len(), 1);
        assert_eq!(updated[0].bbox.x, 1);
        // The leftover detection starts a new track immediately.
        assert!(ev
            .iter()
            .any(|e| e.kind == EventKind::Appeared && e.track_id == 3));
    }

    #[test]
    fn finish_closes_tracks_and_grammar_holds() {
        let mut t = Tracker::new(TrackerConfig::default());
        let mut all = Vec::new();
        for seq in 0..6 {
            all.extend(t.update(&[det(5 + seq as u32, 5)], seq, 0));
        }
        all.extend(t.finish(6, 0));
        check_event_grammar(&all, true).unwrap();
        assert_eq!(all.last().unwrap().kind, EventKind::Exited);
    }

    #[test]
    fn grammar_violations() {
        let mut e = Tracker::event(
            &Track {
                id: Some(1),
                last_box: BoundingBox::new(0, 0, 1, 1).unwrap(),
                hits: 1,
                misses: 0,
                label: Label::Unknown,
                confidence: 0.1,
            },
            EventKind::Updated,
            0,
            0,
        );
        assert!(check_event_grammar(std::slice::from_ref(&e), false).is_err());
        e.kind = EventKind::Appeared;
        assert!(check_event_grammar(std::slice::from_ref(&e), false).is_ok());
        assert!(check_event_grammar(std::slice::from_ref(&e), true).is_err());
        let mut exit = e.clone();
        exit.kind = EventKind::Exited;
        assert!(check_event_grammar(&[e.clone(), exit.clone(), exit], false).is_err());
    }
}
