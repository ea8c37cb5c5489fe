//! Greedy IoU tracker with a constant-velocity fallback gate, and crop-pose merging.

use std::collections::VecDeque;

use crate::geom::{IntersectionGeometry, Point, Rect, ZoneKind};
use crate::ingest::{Detection, PoseDetection, VruClass};

pub const HISTORY_CAPACITY: usize = 64;
pub const IOU_MATCH: f64 = 0.3;
/// Fallback gate as a fraction of the track's larger bbox side.
pub const MOTION_GATE: f64 = 0.5;
pub const POSE_GATE: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame_idx: u64,
    pub center: Point,
    pub bbox: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub class: VruClass,
    history: VecDeque<TrackPoint>,
    pub birth_frame: u64,
    pub first_center: Point,
    pub last_seen: u64,
    pub zone: ZoneKind,
    pub pose_latest: Option<PoseDetection>,
    /// Frame at which `pose_latest` was assigned.
    pub pose_frame: Option<u64>,
}

impl Track {
    pub fn new(track_id: u64, det: &Detection, frame_idx: u64, zone: ZoneKind) -> Self {
        let mut history = VecDeque::with_capacity(HISTORY_CAPACITY);
        history.push_back(TrackPoint { frame_idx, center: det.bbox.center(), bbox: det.bbox });
        Self {
            track_id,
            class: det.class,
            history,
            birth_frame: frame_idx,
            first_center: det.bbox.center(),
            last_seen: frame_idx,
            zone,
            pose_latest: None,
            pose_frame: None,
        }
    }

    pub fn history(&self) -> &VecDeque<TrackPoint> {
        &self.history
    }

    pub fn latest(&self) -> &TrackPoint {
        self.history.back().expect("tracks are never empty")
    }

    pub fn center(&self) -> Point {
        self.latest().center
    }

    pub fn bbox(&self) -> Rect {
        self.latest().bbox
    }

    pub fn seen_at(&self, frame_idx: u64) -> bool {
        self.last_seen == frame_idx
    }

    /// Center extrapolated to `frame_idx` from the last two observations.
    pub fn predicted_center(&self, frame_idx: u64) -> Point {
        let n = self.history.len();
        let last = self.history[n - 1];
        if n < 2 {
            return last.center;
        }
        let prev = self.history[n - 2];
        let df = (last.frame_idx - prev.frame_idx) as f64;
        let ahead = frame_idx.saturating_sub(last.frame_idx) as f64;
        let v = last.center - prev.center;
        Point::new(last.center.x + v.x / df * ahead, last.center.y + v.y / df * ahead)
    }

    fn observe(&mut self, det: &Detection, frame_idx: u64, zone: ZoneKind) {
        if self.history.len() == HISTORY_CAPACITY {
            self.history.pop_front();
        }
        self.history.push_back(TrackPoint { frame_idx, center: det.bbox.center(), bbox: det.bbox });
        self.class = det.class;
        self.last_seen = frame_idx;
        self.zone = zone;
    }
}

#[derive(Debug, Default)]
pub struct AssociationResult {
    /// `(track_id, detection index)` pairs.
    pub matched: Vec<(u64, usize)>,
    pub spawned: Vec<u64>,
    pub retired: Vec<Track>,
}

/// Track table for one camera.
#[derive(Debug, Clone)]
pub struct Tracker {
    geometry: IntersectionGeometry,
    tracks: Vec<Track>,
    next_id: u64,
    max_age: u64,
}

impl Tracker {
    pub fn new(geometry: &IntersectionGeometry) -> Self {
        Self { geometry: geometry.clone(), tracks: Vec::new(), next_id: 1, max_age: 2 * geometry.fps as u64 }
    }

    /// Active tracks in ascending id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn get(&self, track_id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    pub fn associate(&mut self, dets: &[Detection], frame_idx: u64) -> AssociationResult {
        let mut result = AssociationResult::default();
        let mut track_used = vec![false; self.tracks.len()];
        let mut det_used = vec![false; dets.len()];

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            let b = t.bbox();
            for (di, d) in dets.iter().enumerate() {
                let iou = b.iou(&d.bbox);
                if iou >= IOU_MATCH {
                    pairs.push((iou, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, ti, di) in &pairs {
            if !track_used[ti] && !det_used[di] {
                track_used[ti] = true;
                det_used[di] = true;
                result.matched.push((ti as u64, di));
            }
        }

        let mut near: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate().filter(|(i, _)| !track_used[*i]) {
            let pred = t.predicted_center(frame_idx);
            let b = t.bbox();
            let gate = MOTION_GATE * b.w.max(b.h);
            for (di, d) in dets.iter().enumerate().filter(|(i, _)| !det_used[*i]) {
                let dist = pred.dist(d.bbox.center());
                if dist <= gate {
                    near.push((dist, ti, di));
                }
            }
        }
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, ti, di) in &near {
            if !track_used[ti] && !det_used[di] {
                track_used[ti] = true;
                det_used[di] = true;
                result.matched.push((ti as u64, di));
            }
        }

        for m in &mut result.matched {
            let ti = m.0 as usize;
            let d = &dets[m.1];
            let zone = self.geometry.classify_point(d.bbox.center());
            self.tracks[ti].observe(d, frame_idx, zone);
            m.0 = self.tracks[ti].track_id;
        }
        result.matched.sort_unstable();

        for (di, d) in dets.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let zone = self.geometry.classify_point(d.bbox.center());
            self.tracks.push(Track::new(id, d, frame_idx, zone));
            result.matched.push((id, di));
            result.spawned.push(id);
        }

        let max_age = self.max_age;
        let (keep, gone): (Vec<Track>, Vec<Track>) =
            std::mem::take(&mut self.tracks).into_iter().partition(|t| frame_idx.saturating_sub(t.last_seen) <= max_age);
        self.tracks = keep;
        result.retired = gone;
        result
    }

    /// Attaches crop-frame poses to waiting or start-crossing tracks seen this
    /// frame. Returns `(track_id, pose index)` for each assignment.
    pub fn merge_pose(&mut self, poses: &[PoseDetection], frame_idx: u64) -> Vec<(u64, usize)> {
        let g = &self.geometry;
        let full: Vec<Option<PoseDetection>> = poses
            .iter()
            .map(|p| {
                g.crop_to_full(p.bbox.center()).ok()?;
                Some(p.translated(g.crop_rect.x, g.crop_rect.y))
            })
            .collect();

        let mut pairs: Vec<(f64, u64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            if !t.seen_at(frame_idx) || !t.zone.is_pre_crossing() {
                continue;
            }
            let b = t.bbox();
            let gate = POSE_GATE * b.w.max(b.h);
            for (pi, p) in full.iter().enumerate() {
                if let Some(p) = p {
                    let d = p.bbox.center().dist(t.center());
                    if d <= gate {
                        pairs.push((d, t.track_id, ti, pi));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
        let mut track_used = vec![false; self.tracks.len()];
        let mut pose_used = vec![false; poses.len()];
        let mut out = Vec::new();
        for (_, id, ti, pi) in pairs {
            if track_used[ti] || pose_used[pi] {
                continue;
            }
            track_used[ti] = true;
            pose_used[pi] = true;
            self.tracks[ti].pose_latest = full[pi].clone();
            self.tracks[ti].pose_frame = Some(frame_idx);
            out.push((id, pi));
        }
        out.sort_unstable();
        out
    }

    /// Removes every track, returning them in id order.
    pub fn drain(&mut self) -> Vec<Track> {
        std::mem::take(&mut self.tracks)
    }
}
