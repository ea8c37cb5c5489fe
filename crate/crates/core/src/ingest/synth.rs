//! Synthetic intersection scenarios with ground-truth crossing labels.
//!
//! Each VRU spawns inside a waiting area, idles for a few seconds while its
//! body and face turn toward the walking direction of the crosswalk it will
//! use, then
//! walks through the matching start-crossing zone into the crosswalk and
//! leaves the scene.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{kp, Detection, FrameRecord, Keypoint, PoseDetection, VruClass, KEYPOINTS};
use crate::error::{Error, Result};
use crate::geom::{Crosswalk, IntersectionGeometry, Point, Rect, Zone, ZoneKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Day,
    Night,
    Rain,
}

impl Condition {
    pub fn sigma_factor(self) -> f64 {
        match self {
            Condition::Day => 1.0,
            Condition::Night => 2.0,
            Condition::Rain => 1.5,
        }
    }

    pub fn extra_dropout(self) -> f64 {
        match self {
            Condition::Day => 0.0,
            Condition::Night | Condition::Rain => 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Keypoint jitter standard deviation in pixels.
    #[serde(default)]
    pub sigma_px: f64,
    /// Probability that a VRU is missing from a frame.
    #[serde(default)]
    pub dropout: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma_px: 0.0, dropout: 0.0 }
    }
}

/// Class shares of the Table 1 totals (59.6% pedestrian, 31.2% non-motorized,
/// 9.2% electric mobility), each group split evenly between its classes.
pub fn default_class_mix() -> BTreeMap<VruClass, f64> {
    BTreeMap::from([
        (VruClass::Pedestrian, 0.596),
        (VruClass::Cyclist, 0.156),
        (VruClass::Scooter, 0.156),
        (VruClass::EScooter, 0.046),
        (VruClass::EWheelchair, 0.046),
    ])
}

fn default_spawn_gap() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_vrus: usize,
    #[serde(default = "default_class_mix")]
    pub class_mix: BTreeMap<VruClass, f64>,
    /// Explicit per-VRU labels; when absent, labels are split evenly between A and B.
    #[serde(default)]
    pub labels: Option<Vec<Crosswalk>>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub condition: Condition,
    #[serde(default)]
    pub seed: u64,
    /// Mean seconds between consecutive spawns.
    #[serde(default = "default_spawn_gap")]
    pub spawn_gap_s: f64,
}

impl ScenarioSpec {
    pub fn new(n_vrus: usize, seed: u64) -> Self {
        Self {
            n_vrus,
            class_mix: default_class_mix(),
            labels: None,
            noise: NoiseSpec::default(),
            condition: Condition::Day,
            seed,
            spawn_gap_s: default_spawn_gap(),
        }
    }

    pub fn with_noise(mut self, sigma_px: f64, dropout: f64) -> Self {
        self.noise = NoiseSpec { sigma_px, dropout };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.n_vrus == 0 {
            return bad("n_vrus must be positive".into());
        }
        if self.class_mix.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("class probabilities must be non-negative".into());
        }
        let total: f64 = self.class_mix.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return bad(format!("class probabilities sum to {total}, expected 1"));
        }
        if !(self.noise.sigma_px.is_finite() && self.noise.sigma_px >= 0.0) {
            return bad("sigma must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.noise.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        if let Some(l) = &self.labels {
            if l.len() != self.n_vrus {
                return bad(format!("{} labels for {} VRUs", l.len(), self.n_vrus));
            }
        }
        if !(self.spawn_gap_s.is_finite() && self.spawn_gap_s > 0.0) {
            return bad("spawn_gap_s must be positive".into());
        }
        Ok(())
    }

    pub fn effective_sigma(&self) -> f64 {
        self.noise.sigma_px * self.condition.sigma_factor()
    }

    pub fn effective_dropout(&self) -> f64 {
        (self.noise.dropout + self.condition.extra_dropout()).min(0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VruTruth {
    pub vru: usize,
    pub label: Crosswalk,
    pub class: VruClass,
    pub spawn_frame: u64,
    pub first_center: Point,
    pub crossing_frame: u64,
    pub crossing_ts_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub vrus: Vec<VruTruth>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Splits `n` items across weighted buckets by largest remainder.
pub fn quota_counts(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // near-equal remainders go to the heavier bucket
    let rem = |i: usize| exact[i] - exact[i].floor();
    order.sort_by(|&a, &b| {
        let by_rem = if (rem(a) - rem(b)).abs() > 1e-9 { rem(b).total_cmp(&rem(a)) } else { std::cmp::Ordering::Equal };
        by_rem.then(weights[b].total_cmp(&weights[a])).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Bounding box size in pixels at 40 px per meter.
fn body_size(class: VruClass) -> (f64, f64) {
    match class {
        VruClass::Pedestrian => (24.0, 68.0),
        VruClass::Cyclist => (40.0, 72.0),
        VruClass::Scooter => (32.0, 70.0),
        VruClass::EScooter => (32.0, 72.0),
        VruClass::EWheelchair => (36.0, 52.0),
    }
}

fn walk_speed_mps(class: VruClass) -> f64 {
    match class {
        VruClass::Pedestrian => 1.4,
        VruClass::Cyclist => 2.5,
        VruClass::Scooter => 2.0,
        VruClass::EScooter => 2.5,
        VruClass::EWheelchair => 1.2,
    }
}

/// Canonical skeleton in bbox units (fractions of w and h, origin at the
/// bbox top-left), facing up. Left side of the body is at smaller x.
const TEMPLATE: [(f64, f64); KEYPOINTS] = [
    (0.5, 0.12),   // nose
    (0.46, 0.10),  // left eye
    (0.54, 0.10),  // right eye
    (0.42, 0.12),  // left ear
    (0.58, 0.12),  // right ear
    (0.325, 0.25), // left shoulder
    (0.675, 0.25), // right shoulder
    (0.25, 0.40),  // left elbow
    (0.75, 0.40),  // right elbow
    (0.22, 0.52),  // left wrist
    (0.78, 0.52),  // right wrist
    (0.38, 0.55),  // left hip
    (0.62, 0.55),  // right hip
    (0.38, 0.76),  // left knee
    (0.62, 0.76),  // right knee
    (0.38, 0.96),  // left ankle
    (0.62, 0.96),  // right ankle
];

/// Keypoints for a body centered at `center`, body normal at `body` radians and
/// nose direction at `face` radians, both in image coordinates.
pub fn skeleton(center: Point, w: f64, h: f64, body: f64, face: f64) -> [Point; KEYPOINTS] {
    let top_left = Point::new(center.x - w / 2.0, center.y - h / 2.0);
    let mid = Point::new(center.x, top_left.y + 0.25 * h);
    let rot = body + PI / 2.0;
    let (s, c) = rot.sin_cos();
    let mut out = [Point::new(0.0, 0.0); KEYPOINTS];
    for (i, &(u, v)) in TEMPLATE.iter().enumerate() {
        let dx = top_left.x + u * w - mid.x;
        let dy = top_left.y + v * h - mid.y;
        out[i] = Point::new(mid.x + c * dx - s * dy, mid.y + s * dx + c * dy);
    }
    out[kp::NOSE] = Point::new(mid.x + 0.13 * h * face.cos(), mid.y + 0.13 * h * face.sin());
    out
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn bearing(from: Point, to: Point) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Everything known about one VRU at one frame.
struct Sample {
    center: Point,
    body: f64,
    face: f64,
}

struct Plan {
    class: VruClass,
    label: Crosswalk,
    spawn_frame: u64,
    samples: Vec<Sample>,
    crossing_offset: usize,
}

const CONVERGE_S: f64 = 1.5;
const SPAWN_MARGIN: f64 = 30.0;
const CROSSING_DEPTH: f64 = 240.0;

struct Planner<'a> {
    g: &'a IntersectionGeometry,
    fps: f64,
    px_per_m: f64,
}

impl Planner<'_> {
    fn entry(&self, label: Crosswalk) -> Point {
        self.g.entry(label)
    }

    fn crossing_zone(&self, label: Crosswalk) -> Result<&Zone> {
        self.g
            .crossing_zones
            .iter()
            .find(|z| z.label == Some(label))
            .ok_or_else(|| Error::Scenario(format!("no crossing zone labeled {label}")))
    }

    /// Bearing from the entry into the crosswalk, the way a VRU faces while crossing.
    fn travel_direction(&self, label: Crosswalk) -> Result<f64> {
        let entry = self.entry(label);
        let centroid = self.crossing_zone(label)?.polygon.centroid();
        if (centroid - entry).norm() < 1e-9 {
            return Err(Error::Scenario(format!("crossing zone {label} centroid coincides with its entry")));
        }
        Ok(bearing(entry, centroid))
    }

    fn path(&self, start: Point, label: Crosswalk) -> Result<Vec<Point>> {
        let entry = self.entry(label);
        let mut pts = vec![start];
        if let Some(z) = self.g.start_crossing_zones.iter().find(|z| z.label == Some(label)) {
            pts.push(z.polygon.centroid());
        }
        pts.push(entry);
        let dir = self.travel_direction(label)?;
        pts.push(Point::new(entry.x + dir.cos() * CROSSING_DEPTH, entry.y + dir.sin() * CROSSING_DEPTH));
        Ok(pts)
    }

    fn plan(&self, rng: &mut ChaCha8Rng, class: VruClass, label: Crosswalk, spawn_frame: u64, start: Point, area: Rect)
        -> Result<Plan> {
        let mut samples = Vec::new();
        let dir_a = self.travel_direction(Crosswalk::A)?;
        let dir_b = self.travel_direction(Crosswalk::B)?;
        let target = if label == Crosswalk::A { dir_a } else { dir_b };
        let sep = wrap(dir_a - dir_b).abs();
        let offset0 = rng.random_range(-0.3..=0.3) * sep;
        let face_off = rng.random_range(-20f64..=20.0).to_radians();
        let sway_phase = rng.random_range(0.0..2.0 * PI);
        let dwell = (rng.random_range(3.0..6.0) * self.fps).round() as usize;
        let converge = (CONVERGE_S * self.fps).round() as usize;

        let step = Normal::new(0.0, 0.3).expect("valid normal");
        let inner = Rect::new(area.x + SPAWN_MARGIN, area.y + SPAWN_MARGIN, area.w - 2.0 * SPAWN_MARGIN, area.h - 2.0 * SPAWN_MARGIN);
        let mut pos = start;
        for i in 0..dwell {
            if i > 0 {
                pos.x = (pos.x + step.sample(rng)).clamp(inner.x, inner.x + inner.w);
                pos.y = (pos.y + step.sample(rng)).clamp(inner.y, inner.y + inner.h);
            }
            let remaining = dwell - i;
            let k = if remaining > converge { 1.0 } else { remaining as f64 / converge as f64 };
            let sway = 0.05 * (i as f64 / self.fps * 1.3 + sway_phase).sin();
            let body = wrap(target + offset0 * k + sway);
            let center = Point::new(round2(pos.x), round2(pos.y));
            samples.push(Sample { center, body, face: wrap(body + face_off * k) });
        }

        let speed = walk_speed_mps(class) * self.px_per_m / self.fps;
        let path = self.path(pos, label)?;
        let mut crossing_offset = None;
        for leg in path.windows(2) {
            let (a, b) = (leg[0], leg[1]);
            let len = (b - a).norm();
            if len < 1e-9 {
                continue;
            }
            let heading = bearing(a, b);
            let n = (len / speed).ceil() as usize;
            for j in 1..=n {
                let t = j as f64 / n as f64;
                let c = Point::new(round2(a.x + (b.x - a.x) * t), round2(a.y + (b.y - a.y) * t));
                if crossing_offset.is_none() && self.g.classify_point(c) == ZoneKind::Crossing(self.crossing_index(label)) {
                    crossing_offset = Some(samples.len());
                }
                samples.push(Sample { center: c, body: heading, face: heading });
            }
        }
        let crossing_offset =
            crossing_offset.ok_or_else(|| Error::Scenario(format!("path for crosswalk {label} never reaches it")))?;
        Ok(Plan { class, label, spawn_frame, samples, crossing_offset })
    }

    fn crossing_index(&self, label: Crosswalk) -> usize {
        self.g.crossing_zones.iter().position(|z| z.label == Some(label)).unwrap_or(usize::MAX)
    }
}

/// Renders a deterministic frame stream and its ground truth.
pub fn generate_scenario(spec: &ScenarioSpec, g: &IntersectionGeometry) -> Result<(Vec<FrameRecord>, GroundTruth)> {
    spec.validate()?;
    g.validate()?;
    g.require_labeled_crosswalks()?;
    if g.waiting_areas.is_empty() {
        return Err(Error::Scenario("geometry has no waiting area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fps = g.fps as f64;
    let planner = Planner { g, fps, px_per_m: g.px_per_meter.unwrap_or(40.0) };

    let classes: Vec<VruClass> = spec.class_mix.keys().copied().collect();
    let weights: Vec<f64> = spec.class_mix.values().copied().collect();
    let mut class_list: Vec<VruClass> = quota_counts(&weights, spec.n_vrus)
        .into_iter()
        .zip(&classes)
        .flat_map(|(n, &c)| std::iter::repeat_n(c, n))
        .collect();
    class_list.shuffle(&mut rng);
    let labels = match &spec.labels {
        Some(l) => l.clone(),
        None => {
            let mut l: Vec<Crosswalk> = (0..spec.n_vrus).map(|i| if i % 2 == 0 { Crosswalk::A } else { Crosswalk::B }).collect();
            l.shuffle(&mut rng);
            l
        }
    };

    let mut plans: Vec<Plan> = Vec::with_capacity(spec.n_vrus);
    let mut next_spawn = 0.0f64;
    for (i, (&class, &label)) in class_list.iter().zip(&labels).enumerate() {
        let spawn_frame = next_spawn.round() as u64;
        next_spawn += spec.spawn_gap_s * fps * rng.random_range(0.5..1.5);
        let area_idx = i % g.waiting_areas.len();
        let area = bounding_rect(g.waiting_areas[area_idx].polygon.vertices());
        let busy: Vec<Point> = plans
            .iter()
            .filter_map(|p| {
                let k = spawn_frame.checked_sub(p.spawn_frame)? as usize;
                p.samples.get(k).map(|s| s.center)
            })
            .collect();
        let start = pick_start(&mut rng, g, area_idx, area, &busy);
        plans.push(planner.plan(&mut rng, class, label, spawn_frame, start, area)?);
    }

    let sigma = spec.effective_sigma();
    let dropout = spec.effective_dropout();
    let jitter = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::Scenario(e.to_string()))?;
    let last_frame = plans.iter().map(|p| p.spawn_frame + p.samples.len() as u64).max().unwrap_or(0);
    let ts = |f: u64| (f as f64 * 1000.0 / fps).round() as u64;
    let crop = g.crop_rect;
    let mut frames = Vec::with_capacity(last_frame as usize + 1);
    for f in 0..=last_frame {
        let mut rec = FrameRecord { frame_idx: f, ts_ms: ts(f), detections: Vec::new(), crop_poses: Vec::new() };
        for p in &plans {
            let Some(k) = f.checked_sub(p.spawn_frame) else { continue };
            let Some(s) = p.samples.get(k as usize) else { continue };
            if dropout > 0.0 && rng.random::<f64>() < dropout {
                continue;
            }
            let (w, h) = body_size(p.class);
            let mut noisy = |v: f64, scale: f64| if sigma > 0.0 { v + scale * jitter.sample(&mut rng) } else { v };
            let c = Point::new(noisy(s.center.x, 0.5), noisy(s.center.y, 0.5));
            let bbox = Rect::new(round2(c.x - w / 2.0), round2(c.y - h / 2.0), w, h);
            let conf = round2(0.85 + 0.1 * rng.random::<f64>());
            rec.detections.push(Detection { bbox, class: p.class, conf });
            if !crop.contains(s.center) {
                continue;
            }
            let kps = skeleton(s.center, w, h, s.body, s.face);
            let kps = kps
                .iter()
                .map(|pt| {
                    let dx = if sigma > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
                    let dy = if sigma > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
                    Keypoint { x: round2(pt.x + dx - crop.x), y: round2(pt.y + dy - crop.y), conf: 0.9 }
                })
                .collect();
            let pb = Rect::new(round2(s.center.x - w / 2.0 - crop.x), round2(s.center.y - h / 2.0 - crop.y), w, h);
            rec.crop_poses.push(PoseDetection { bbox: pb, kps });
        }
        frames.push(rec);
    }

    let vrus = plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let crossing_frame = p.spawn_frame + p.crossing_offset as u64;
            VruTruth {
                vru: i,
                label: p.label,
                class: p.class,
                spawn_frame: p.spawn_frame,
                first_center: p.samples[0].center,
                crossing_frame,
                crossing_ts_ms: ts(crossing_frame),
            }
        })
        .collect();
    Ok((frames, GroundTruth { vrus }))
}

fn bounding_rect(vs: &[Point]) -> Rect {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for v in vs {
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}

/// Rejection-samples a spawn point inside the waiting area, away from VRUs already there.
fn pick_start(rng: &mut ChaCha8Rng, g: &IntersectionGeometry, area_idx: usize, area: Rect, busy: &[Point]) -> Point {
    let mut fallback = None;
    for _ in 0..64 {
        let p = Point::new(
            rng.random_range(area.x + SPAWN_MARGIN..=area.x + area.w - SPAWN_MARGIN),
            rng.random_range(area.y + SPAWN_MARGIN..=area.y + area.h - SPAWN_MARGIN),
        );
        if g.classify_point(p) != ZoneKind::Waiting(area_idx) {
            continue;
        }
        fallback.get_or_insert(p);
        if busy.iter().all(|b| b.dist(p) > 60.0) {
            return p;
        }
    }
    fallback.unwrap_or_else(|| g.waiting_areas[area_idx].polygon.centroid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_stream_from, write_stream};

    fn geo() -> IntersectionGeometry {
        IntersectionGeometry::reference_corner()
    }

    #[test]
    fn quota_is_exact_and_complete() {
        assert_eq!(quota_counts(&[0.5, 0.5], 3), vec![2, 1]);
        assert_eq!(quota_counts(&[0.596, 0.156, 0.156, 0.046, 0.046], 100), vec![60, 16, 16, 4, 4]);
        assert_eq!(quota_counts(&[1.0], 7), vec![7]);
    }

    #[test]
    fn single_vru_ends_in_its_crosswalk() {
        for label in [Crosswalk::A, Crosswalk::B] {
            let mut spec = ScenarioSpec::new(1, 4);
            spec.labels = Some(vec![label]);
            let g = geo();
            let (frames, truth) = generate_scenario(&spec, &g).unwrap();
            let last = frames.iter().rev().find_map(|f| f.detections.first()).unwrap();
            assert_eq!(g.zone_label(g.classify_point(last.bbox.center())), Some(label));
            assert_eq!(truth.vrus[0].label, label);
            let cf = truth.vrus[0].crossing_frame as usize;
            let at = frames[cf].detections[0].bbox.center();
            assert!(g.classify_point(at).is_crossing());
            let before = frames[cf - 1].detections[0].bbox.center();
            assert!(!g.classify_point(before).is_crossing());
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = ScenarioSpec::new(6, 11).with_noise(2.0, 0.05);
        let render = || {
            let (frames, truth) = generate_scenario(&spec, &geo()).unwrap();
            let mut buf = Vec::new();
            write_stream(&frames, &mut buf).unwrap();
            (buf, serde_json::to_string(&truth).unwrap())
        };
        assert_eq!(render(), render());
        let (buf, _) = render();
        assert_eq!(read_stream_from(&buf[..]).unwrap(), generate_scenario(&spec, &geo()).unwrap().0);
    }

    #[test]
    fn labels_balanced_and_classes_follow_mix() {
        let (_, truth) = generate_scenario(&ScenarioSpec::new(100, 1), &geo()).unwrap();
        let a = truth.vrus.iter().filter(|v| v.label == Crosswalk::A).count();
        assert_eq!(a, 50);
        let ped = truth.vrus.iter().filter(|v| v.class == VruClass::Pedestrian).count();
        assert_eq!(ped, 60);
    }

    #[test]
    fn rejects_invalid_specs() {
        let g = geo();
        let mut s = ScenarioSpec::new(3, 0);
        s.noise.dropout = 1.0;
        assert!(generate_scenario(&s, &g).is_err());
        let mut s = ScenarioSpec::new(3, 0);
        s.noise.sigma_px = -1.0;
        assert!(generate_scenario(&s, &g).is_err());
        let mut s = ScenarioSpec::new(3, 0);
        s.class_mix.insert(VruClass::Cyclist, 0.5);
        assert!(generate_scenario(&s, &g).is_err());
        assert!(generate_scenario(&ScenarioSpec::new(0, 0), &g).is_err());

        let mut unlabeled = geo();
        unlabeled.crossing_zones[1].label = None;
        assert!(generate_scenario(&ScenarioSpec::new(2, 0), &unlabeled).is_err());
    }

    #[test]
    fn conditions_scale_noise() {
        let mut s = ScenarioSpec::new(1, 0).with_noise(2.0, 0.1);
        s.condition = Condition::Night;
        assert_eq!(s.effective_sigma(), 4.0);
        assert!((s.effective_dropout() - 0.15).abs() < 1e-12);
        s.condition = Condition::Rain;
        assert_eq!(s.effective_sigma(), 3.0);
        s.noise.dropout = 0.93;
        assert_eq!(s.effective_dropout(), 0.95);
    }

    #[test]
    fn skeleton_faces_requested_direction() {
        let c = Point::new(500.0, 500.0);
        for deg in [-170.0f64, -90.0, 0.0, 45.0, 135.0] {
            let a = deg.to_radians();
            let k = skeleton(c, 24.0, 68.0, a, a);
            let ls = k[kp::LEFT_SHOULDER];
            let rs = k[kp::RIGHT_SHOULDER];
            assert!((rs.dist(ls) - 0.35 * 24.0).abs() < 1e-9);
            let mid = Point::new((ls.x + rs.x) / 2.0, (ls.y + rs.y) / 2.0);
            let n = k[kp::NOSE] - mid;
            assert!((wrap(n.y.atan2(n.x) - a)).abs() < 1e-9);
        }
    }
}
