//! Zones of interest at one intersection corner and the crop region used for
//! pose extraction. All coordinates are image pixels.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;

    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned box `(x, y, w, h)` with `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Rect { x: v[0], y: v[1], w: v[2], h: v[3] }
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x, r.y, r.w, r.h]
    }
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn from_center(c: Point, w: f64, h: f64) -> Self {
        Rect::new(c.x - w / 2.0, c.y - h / 2.0, w, h)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }

    pub fn iou(&self, o: &Rect) -> f64 {
        let ix = (self.x + self.w).min(o.x + o.w) - self.x.max(o.x);
        let iy = (self.y + self.h).min(o.y + o.h) - self.y.max(o.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Crosswalk {
    A,
    B,
}

impl Crosswalk {
    /// Binary target: A = 0, B = 1.
    pub fn as_target(self) -> f64 {
        match self {
            Crosswalk::A => 0.0,
            Crosswalk::B => 1.0,
        }
    }

    pub fn other(self) -> Crosswalk {
        match self {
            Crosswalk::A => Crosswalk::B,
            Crosswalk::B => Crosswalk::A,
        }
    }
}

impl std::fmt::Display for Crosswalk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Crosswalk::A => "A",
            Crosswalk::B => "B",
        })
    }
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let len = a.dist(b);
    if cross.abs() > 1e-9 * len.max(1.0) {
        return false;
    }
    p.x >= a.x.min(b.x) - 1e-9 && p.x <= a.x.max(b.x) + 1e-9 && p.y >= a.y.min(b.y) - 1e-9 && p.y <= a.y.max(b.y) + 1e-9
}

fn contains_unchecked(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Even-odd containment; points on an edge count as inside.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> Result<bool> {
    if poly.len() < 3 || signed_area(poly).abs() < 1e-12 {
        return Err(Error::DegeneratePolygon);
    }
    Ok(contains_unchecked(p, poly))
}

/// A simple polygon with at least three vertices and nonzero area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon(Vec<Point>);

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 || signed_area(&vertices).abs() < 1e-12 {
            return Err(Error::DegeneratePolygon);
        }
        Ok(Self(vertices))
    }

    pub fn rect(r: Rect) -> Self {
        Self(vec![
            Point::new(r.x, r.y),
            Point::new(r.x + r.w, r.y),
            Point::new(r.x + r.w, r.y + r.h),
            Point::new(r.x, r.y + r.h),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.0
    }

    pub fn contains(&self, p: Point) -> bool {
        contains_unchecked(p, &self.0)
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.0).abs()
    }

    pub fn centroid(&self) -> Point {
        let a = signed_area(&self.0);
        let n = self.0.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let (p, q) = (self.0[i], self.0[(i + 1) % n]);
            let k = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * k;
            cy += (p.y + q.y) * k;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = Error;
    fn try_from(v: Vec<Point>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    #[serde(default)]
    pub label: Option<Crosswalk>,
    pub polygon: Polygon,
}

impl Zone {
    pub fn new(id: &str, label: Option<Crosswalk>, polygon: Polygon) -> Self {
        Self { id: id.to_string(), label, polygon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkEntries {
    #[serde(rename = "A")]
    pub a: Point,
    #[serde(rename = "B")]
    pub b: Point,
}

/// Which zone a point falls in. Indices refer to the geometry's zone lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum ZoneKind {
    #[default]
    Outside,
    Waiting(usize),
    StartCrossing(usize),
    Crossing(usize),
}

impl ZoneKind {
    /// Position along the crossing progression, used for tie-breaking.
    pub fn rank(self) -> u8 {
        match self {
            ZoneKind::Outside => 0,
            ZoneKind::Waiting(_) => 1,
            ZoneKind::StartCrossing(_) => 2,
            ZoneKind::Crossing(_) => 3,
        }
    }

    pub fn is_crossing(self) -> bool {
        matches!(self, ZoneKind::Crossing(_))
    }

    /// Waiting or start-crossing: pose extraction is active here.
    pub fn is_pre_crossing(self) -> bool {
        matches!(self, ZoneKind::Waiting(_) | ZoneKind::StartCrossing(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionGeometry {
    pub fps: u32,
    #[serde(default)]
    pub px_per_meter: Option<f64>,
    /// Camera frame `[width, height]`; defaults to 1920x1080 when absent.
    #[serde(default = "default_frame_size")]
    pub frame_size: [f64; 2],
    pub crop_rect: Rect,
    pub waiting_areas: Vec<Zone>,
    pub start_crossing_zones: Vec<Zone>,
    pub crossing_zones: Vec<Zone>,
    pub crosswalk_entries: CrosswalkEntries,
}

fn default_frame_size() -> [f64; 2] {
    [1920.0, 1080.0]
}

impl IntersectionGeometry {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text).map_err(|e| Error::Geometry(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 {
            return Err(Error::Geometry("fps must be positive".into()));
        }
        if let Some(s) = self.px_per_meter {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Geometry("px_per_meter must be positive".into()));
            }
        }
        if !(self.frame_size[0] > 0.0 && self.frame_size[1] > 0.0) {
            return Err(Error::Geometry("frame_size must be positive".into()));
        }
        if !(self.crop_rect.w > 0.0 && self.crop_rect.h > 0.0) {
            return Err(Error::Geometry("crop_rect must have positive size".into()));
        }
        if self.waiting_areas.is_empty() {
            return Err(Error::Geometry("at least one waiting area is required".into()));
        }
        for w in &self.waiting_areas {
            if !w.polygon.vertices().iter().all(|&p| self.crop_rect.contains(p)) {
                return Err(Error::Geometry(format!("crop_rect does not contain waiting area {}", w.id)));
            }
        }
        self.require_labeled_crosswalks()
    }

    /// Both crosswalk labels must be served by a crossing zone.
    pub fn require_labeled_crosswalks(&self) -> Result<()> {
        for label in [Crosswalk::A, Crosswalk::B] {
            if !self.crossing_zones.iter().any(|z| z.label == Some(label)) {
                return Err(Error::Geometry(format!("no crossing zone labeled {label}")));
            }
        }
        Ok(())
    }

    pub fn classify_point(&self, p: Point) -> ZoneKind {
        if let Some(i) = self.crossing_zones.iter().position(|z| z.polygon.contains(p)) {
            return ZoneKind::Crossing(i);
        }
        if let Some(i) = self.start_crossing_zones.iter().position(|z| z.polygon.contains(p)) {
            return ZoneKind::StartCrossing(i);
        }
        if let Some(i) = self.waiting_areas.iter().position(|z| z.polygon.contains(p)) {
            return ZoneKind::Waiting(i);
        }
        ZoneKind::Outside
    }

    /// Crosswalk label attached to a zone, if any.
    pub fn zone_label(&self, z: ZoneKind) -> Option<Crosswalk> {
        match z {
            ZoneKind::Crossing(i) => self.crossing_zones.get(i).and_then(|z| z.label),
            ZoneKind::StartCrossing(i) => self.start_crossing_zones.get(i).and_then(|z| z.label),
            ZoneKind::Waiting(i) => self.waiting_areas.get(i).and_then(|z| z.label),
            ZoneKind::Outside => None,
        }
    }

    pub fn entry(&self, c: Crosswalk) -> Point {
        match c {
            Crosswalk::A => self.crosswalk_entries.a,
            Crosswalk::B => self.crosswalk_entries.b,
        }
    }

    pub fn frame_diagonal(&self) -> f64 {
        self.frame_size[0].hypot(self.frame_size[1])
    }

    pub fn frame_area(&self) -> f64 {
        self.frame_size[0] * self.frame_size[1]
    }

    /// Translates a crop-image point into the full frame.
    pub fn crop_to_full(&self, p: Point) -> Result<Point> {
        let r = &self.crop_rect;
        if !(p.x >= 0.0 && p.x <= r.w && p.y >= 0.0 && p.y <= r.h) {
            return Err(Error::OutsideCrop { x: p.x, y: p.y });
        }
        Ok(Point::new(r.x + p.x, r.y + p.y))
    }

    pub fn full_to_crop(&self, p: Point) -> Result<Point> {
        let r = &self.crop_rect;
        if !r.contains(p) {
            return Err(Error::OutsideCrop { x: p.x, y: p.y });
        }
        Ok(Point::new(p.x - r.x, p.y - r.y))
    }

    /// Waiting area whose centroid is nearest to `p`.
    pub fn nearest_waiting_area(&self, p: Point) -> &Zone {
        self.waiting_areas
            .iter()
            .min_by(|a, b| a.polygon.centroid().dist(p).total_cmp(&b.polygon.centroid().dist(p)))
            .expect("validated geometry has a waiting area")
    }

    /// A single-corner layout in a 1920x1080 frame at 20 fps: a 300 px square
    /// waiting area with crosswalk A leaving east and crosswalk B leaving south.
    pub fn reference_corner() -> Self {
        let poly = |x, y, w, h| Polygon::rect(Rect::new(x, y, w, h));
        Self {
            fps: 20,
            px_per_meter: Some(40.0),
            frame_size: [1920.0, 1080.0],
            crop_rect: Rect::new(660.0, 360.0, 440.0, 440.0),
            waiting_areas: vec![Zone::new("W1", None, poly(700.0, 400.0, 300.0, 300.0))],
            start_crossing_zones: vec![
                Zone::new("SA", Some(Crosswalk::A), poly(1000.0, 450.0, 60.0, 200.0)),
                Zone::new("SB", Some(Crosswalk::B), poly(750.0, 700.0, 200.0, 60.0)),
            ],
            crossing_zones: vec![
                Zone::new("CA", Some(Crosswalk::A), poly(1060.0, 450.0, 640.0, 200.0)),
                Zone::new("CB", Some(Crosswalk::B), poly(750.0, 760.0, 200.0, 320.0)),
            ],
            crosswalk_entries: CrosswalkEntries { a: Point::new(1060.0, 550.0), b: Point::new(850.0, 760.0) },
        }
    }
}
