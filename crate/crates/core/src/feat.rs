//! Per-frame features, 10-frame temporal filtering and 5-step windows.
//!
//! Slot layout of the 16-wide step vector:
//!
//! | slots  | content                                              |
//! |--------|------------------------------------------------------|
//! | 0..2   | bbox center divided by frame width and height         |
//! | 2..5   | zone one-hot: waiting, start-crossing, crossing       |
//! | 5      | speed, m/s (or px/s over the frame diagonal)          |
//! | 6..8   | heading sin, cos                                     |
//! | 8..10  | distance to entries A and B over the frame diagonal   |
//! | 10     | waiting-area area over frame area                    |
//! | 11..13 | body angle sin, cos                                  |
//! | 13..15 | face angle sin, cos                                  |
//! | 15     | shoulder distance over pose bbox height              |
//!
//! Undefined angles are encoded as (0, 0).

use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{IntersectionGeometry, Point, ZoneKind};
use crate::ingest::{kp, PoseDetection};
use crate::nn::Tensor2;
use crate::scalar::Scalar;
use crate::track::{Track, TrackPoint};

pub const FEATURE_DIM: usize = 16;
pub const WINDOW_STEPS: usize = 5;
pub const STEP_FRAMES: u64 = 10;
pub const POSE_CONF: f64 = 0.3;
/// Below this displacement (px) the heading is undefined.
pub const MIN_HEADING_PX: f64 = 1.0;

pub mod slot {
    use std::ops::Range;
    pub const CENTER: Range<usize> = 0..2;
    pub const ZONE: Range<usize> = 2..5;
    pub const SPEED: usize = 5;
    pub const HEADING: Range<usize> = 6..8;
    pub const ENTRY_DIST: Range<usize> = 8..10;
    pub const COMPACTNESS: usize = 10;
    pub const BODY: Range<usize> = 11..13;
    pub const FACE: Range<usize> = 13..15;
    pub const SHOULDER: usize = 15;
}

/// Human-readable form of the slot layout; its hash is stored in weight files.
pub const LAYOUT_DESCRIPTION: &str = "crosswise-features/1 d=16 \
center_x/W center_y/H zone_waiting zone_start zone_crossing speed heading_sin heading_cos \
dist_a/diag dist_b/diag waiting_area/frame_area body_sin body_cos face_sin face_cos shoulder/bbox_h \
steps=5 step_frames=10";

/// First 16 hex digits of the SHA-256 of [`LAYOUT_DESCRIPTION`].
pub const LAYOUT_HASH: &str = "79ea51e7ab2a7983";

pub fn layout_hash_of(description: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(description.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "L")]
    Location,
    #[serde(rename = "M")]
    Motion,
    #[serde(rename = "G")]
    Geometric,
    #[serde(rename = "P")]
    Pose,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] =
        [FeatureGroup::Location, FeatureGroup::Motion, FeatureGroup::Geometric, FeatureGroup::Pose];

    pub fn slots(self) -> Range<usize> {
        match self {
            FeatureGroup::Location => 0..5,
            FeatureGroup::Motion => 5..8,
            FeatureGroup::Geometric => 8..11,
            FeatureGroup::Pose => 11..16,
        }
    }

    pub fn letter(self) -> char {
        match self {
            FeatureGroup::Location => 'L',
            FeatureGroup::Motion => 'M',
            FeatureGroup::Geometric => 'G',
            FeatureGroup::Pose => 'P',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.letter() == c.to_ascii_uppercase())
    }
}

/// "L+M+G" style name for a group set.
pub fn group_name(groups: &[FeatureGroup]) -> String {
    groups.iter().map(|g| g.letter().to_string()).collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFeatures(pub [f64; FEATURE_DIM]);

impl Default for StepFeatures {
    fn default() -> Self {
        StepFeatures([0.0; FEATURE_DIM])
    }
}

impl StepFeatures {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn set_pair(&mut self, r: Range<usize>, pair: Option<(f64, f64)>) {
        let (s, c) = pair.unwrap_or((0.0, 0.0));
        self.0[r.start] = s;
        self.0[r.start + 1] = c;
    }

    fn pair(&self, r: Range<usize>) -> (f64, f64) {
        (self.0[r.start], self.0[r.start + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub track_id: u64,
    pub end_frame_idx: u64,
    /// Oldest step first.
    pub steps: [StepFeatures; WINDOW_STEPS],
}

impl FeatureWindow {
    pub fn to_tensor<T: Scalar>(&self) -> Tensor2<T> {
        Tensor2::from_fn(WINDOW_STEPS, FEATURE_DIM, |t, j| T::c(self.steps[t].0[j]))
    }

    /// Copy with every slot outside `keep` set to zero.
    pub fn masked(&self, keep: &[FeatureGroup]) -> FeatureWindow {
        let mut out = self.clone();
        for s in out.steps.iter_mut() {
            for g in FeatureGroup::ALL.iter().filter(|g| !keep.contains(g)) {
                for j in g.slots() {
                    s.0[j] = 0.0;
                }
            }
        }
        out
    }
}

/// How pixel speeds are normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedScale {
    PxPerMeter(f64),
    Diagonal(f64),
}

impl SpeedScale {
    pub fn for_geometry(g: &IntersectionGeometry) -> Self {
        match g.px_per_meter {
            Some(s) => SpeedScale::PxPerMeter(s),
            None => SpeedScale::Diagonal(g.frame_diagonal()),
        }
    }

    fn apply(self, px_per_s: f64) -> f64 {
        match self {
            SpeedScale::PxPerMeter(s) | SpeedScale::Diagonal(s) => px_per_s / s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Motion {
    pub speed: f64,
    /// `(sin, cos)` of the heading, if the track moved at least a pixel.
    pub heading: Option<(f64, f64)>,
}

/// Speed and heading from the displacement over the latest 10-frame span.
pub fn motion_features<'a, I>(history: I, fps: f64, scale: SpeedScale) -> Motion
where
    I: IntoIterator<Item = &'a TrackPoint>,
    I::IntoIter: DoubleEndedIterator,
{
    let mut it = history.into_iter().rev();
    let Some(last) = it.next() else { return Motion::default() };
    let mut first = None;
    for p in it {
        if last.frame_idx - p.frame_idx > STEP_FRAMES && first.is_some() {
            break;
        }
        first = Some(p);
    }
    let Some(first) = first else { return Motion::default() };
    let frames = (last.frame_idx - first.frame_idx) as f64;
    let d = last.center - first.center;
    let dist = d.norm();
    let heading = (dist >= MIN_HEADING_PX).then(|| (d.y / dist, d.x / dist));
    Motion { speed: scale.apply(dist * fps / frames), heading }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseFeatures {
    pub body: Option<(f64, f64)>,
    pub face: Option<(f64, f64)>,
    /// Pixel distance between the shoulders, 0 when a shoulder is missing.
    pub shoulder: f64,
}

/// Body angle, face angle and shoulder span from a full-frame pose.
pub fn pose_features(pose: &PoseDetection) -> PoseFeatures {
    let get = |i: usize| pose.kps.get(i).filter(|k| k.conf >= POSE_CONF).map(|k| k.point());
    let (Some(ls), Some(rs)) = (get(kp::LEFT_SHOULDER), get(kp::RIGHT_SHOULDER)) else {
        return PoseFeatures::default();
    };
    let span = rs - ls;
    let shoulder = span.norm();
    let mut out = PoseFeatures { shoulder, ..Default::default() };
    let Some(nose) = get(kp::NOSE) else { return out };
    let mid = Point::new((ls.x + rs.x) / 2.0, (ls.y + rs.y) / 2.0);
    let to_nose = nose - mid;
    let nn = to_nose.norm();
    if nn > 0.0 {
        out.face = Some((to_nose.y / nn, to_nose.x / nn));
    }
    if shoulder > 0.0 {
        let normal = Point::new(-span.y / shoulder, span.x / shoulder);
        let side = normal.x * to_nose.x + normal.y * to_nose.y;
        if side != 0.0 {
            let s = side.signum();
            out.body = Some((s * normal.y, s * normal.x));
        }
    }
    out
}

/// Normalized distances to both entries and the waiting-area compactness.
pub fn geometric_features(center: Point, g: &IntersectionGeometry) -> (f64, f64, f64) {
    let diag = g.frame_diagonal();
    let area = match g.classify_point(center) {
        ZoneKind::Waiting(i) => &g.waiting_areas[i],
        _ => g.nearest_waiting_area(center),
    };
    (
        center.dist(g.crosswalk_entries.a) / diag,
        center.dist(g.crosswalk_entries.b) / diag,
        area.polygon.area() / g.frame_area(),
    )
}

/// Features for one frame of a track. `pose` is used only if given.
pub fn frame_features(track: &Track, pose: Option<&PoseDetection>, g: &IntersectionGeometry) -> StepFeatures {
    let mut v = StepFeatures::default();
    let c = track.center();
    v.0[0] = c.x / g.frame_size[0];
    v.0[1] = c.y / g.frame_size[1];
    match track.zone {
        ZoneKind::Waiting(_) => v.0[2] = 1.0,
        ZoneKind::StartCrossing(_) => v.0[3] = 1.0,
        ZoneKind::Crossing(_) => v.0[4] = 1.0,
        ZoneKind::Outside => {}
    }
    let m = motion_features(track.history(), g.fps as f64, SpeedScale::for_geometry(g));
    v.0[slot::SPEED] = m.speed;
    v.set_pair(slot::HEADING, m.heading);
    let (da, db, compact) = geometric_features(c, g);
    v.0[8] = da;
    v.0[9] = db;
    v.0[slot::COMPACTNESS] = compact;
    if let Some(p) = pose {
        let pf = pose_features(p);
        v.set_pair(slot::BODY, pf.body);
        v.set_pair(slot::FACE, pf.face);
        if p.bbox.h > 0.0 {
            v.0[slot::SHOULDER] = pf.shoulder / p.bbox.h;
        }
    }
    if v.is_finite() {
        v
    } else {
        StepFeatures::default()
    }
}

fn mean_pair(frames: &[StepFeatures], r: Range<usize>) -> Option<(f64, f64)> {
    let (s, c) = frames.iter().map(|f| f.pair(r.clone())).fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = s.hypot(c);
    (n > 1e-9).then(|| (s / n, c / n))
}

/// Collapses up to ten per-frame vectors into one step.
///
/// Scalar slots are averaged; angle pairs are averaged as unit vectors; the
/// zone one-hot takes the most frequent zone, later zones winning ties. The
/// shoulder slot averages only frames where it was measured.
pub fn temporal_filter(frames: &[StepFeatures]) -> Result<StepFeatures> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    let n = frames.len() as f64;
    let mut out = StepFeatures::default();
    for j in [0, 1, slot::SPEED, 8, 9, slot::COMPACTNESS] {
        out.0[j] = frames.iter().map(|f| f.0[j]).sum::<f64>() / n;
    }
    // index 0 is "outside"
    let mut counts = [0usize; 4];
    for f in frames {
        let z = slot::ZONE.clone().position(|j| f.0[j] > 0.5).map_or(0, |i| i + 1);
        counts[z] += 1;
    }
    let best = (0..4).rev().max_by_key(|&i| (counts[i], i)).unwrap_or(0);
    if best > 0 {
        out.0[slot::ZONE.start + best - 1] = 1.0;
    }
    out.set_pair(slot::HEADING, mean_pair(frames, slot::HEADING));
    out.set_pair(slot::BODY, mean_pair(frames, slot::BODY));
    out.set_pair(slot::FACE, mean_pair(frames, slot::FACE));
    let measured: Vec<f64> = frames.iter().map(|f| f.0[slot::SHOULDER]).filter(|&s| s > 0.0).collect();
    if !measured.is_empty() {
        out.0[slot::SHOULDER] = measured.iter().sum::<f64>() / measured.len() as f64;
    }
    Ok(out)
}

/// Number of windows produced by `n_steps` consecutive steps.
pub fn window_count(n_steps: usize) -> usize {
    n_steps.saturating_sub(WINDOW_STEPS - 1)
}

/// Sliding window over one track's steps.
#[derive(Debug, Clone, Default)]
pub struct WindowAssembler {
    steps: VecDeque<StepFeatures>,
}

impl WindowAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, track_id: u64, end_frame_idx: u64, step: StepFeatures) -> Option<FeatureWindow> {
        if self.steps.len() == WINDOW_STEPS {
            self.steps.pop_front();
        }
        self.steps.push_back(step);
        if self.steps.len() < WINDOW_STEPS {
            return None;
        }
        let mut steps = [StepFeatures::default(); WINDOW_STEPS];
        for (d, s) in steps.iter_mut().zip(&self.steps) {
            *d = *s;
        }
        Some(FeatureWindow { track_id, end_frame_idx, steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
struct TrackFeatures {
    birth_frame: u64,
    buffer: Vec<StepFeatures>,
    assembler: WindowAssembler,
    stopped: bool,
}

/// Per-track feature state: buffers frame features while the track is in a
/// waiting or start-crossing zone, closes a step every tenth frame after the
/// track's birth and emits windows until the track reaches a crossing zone.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    geometry: IntersectionGeometry,
    tracks: HashMap<u64, TrackFeatures>,
}

impl FeatureExtractor {
    pub fn new(geometry: &IntersectionGeometry) -> Self {
        Self { geometry: geometry.clone(), tracks: HashMap::new() }
    }

    /// Feeds one frame for `track`. Must be called every frame the track is
    /// active, seen or not, so step boundaries stay on the 10-frame grid.
    pub fn observe(&mut self, track: &Track, frame_idx: u64) -> Option<FeatureWindow> {
        let st = self
            .tracks
            .entry(track.track_id)
            .or_insert_with(|| TrackFeatures { birth_frame: track.birth_frame, ..Default::default() });
        if st.stopped {
            return None;
        }
        if track.zone.is_crossing() {
            st.stopped = true;
            st.buffer.clear();
            return None;
        }
        if track.seen_at(frame_idx) && track.zone.is_pre_crossing() {
            let pose = track.pose_latest.as_ref().filter(|_| track.pose_frame == Some(frame_idx));
            st.buffer.push(frame_features(track, pose, &self.geometry));
        }
        if !(frame_idx + 1 - st.birth_frame).is_multiple_of(STEP_FRAMES) {
            return None;
        }
        // a step with no observations is skipped
        let step = temporal_filter(&st.buffer).ok()?;
        st.buffer.clear();
        st.assembler.push(track.track_id, frame_idx, step)
    }

    pub fn forget(&mut self, track_id: u64) {
        self.tracks.remove(&track_id);
    }

    pub fn is_stopped(&self, track_id: u64) -> bool {
        self.tracks.get(&track_id).is_some_and(|t| t.stopped)
    }
}
