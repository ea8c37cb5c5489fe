//! Per-frame detection and pose records, read from line-delimited JSON or
//! produced by the synthetic scenario generator.

pub mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

pub const KEYPOINTS: usize = 17;

/// COCO keypoint indices used by the feature extractor.
pub mod kp {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const LEFT_EAR: usize = 3;
    pub const RIGHT_EAR: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VruClass {
    Pedestrian,
    Cyclist,
    Scooter,
    EScooter,
    EWheelchair,
}

/// Coarse grouping used for dataset summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VruGroup {
    Pedestrian,
    NonMotorized,
    ElectricMobility,
}

impl VruClass {
    pub const ALL: [VruClass; 5] =
        [VruClass::Pedestrian, VruClass::Cyclist, VruClass::Scooter, VruClass::EScooter, VruClass::EWheelchair];

    pub fn group(self) -> VruGroup {
        match self {
            VruClass::Pedestrian => VruGroup::Pedestrian,
            VruClass::Cyclist | VruClass::Scooter => VruGroup::NonMotorized,
            VruClass::EScooter | VruClass::EWheelchair => VruGroup::ElectricMobility,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VruClass::Pedestrian => "pedestrian",
            VruClass::Cyclist => "cyclist",
            VruClass::Scooter => "scooter",
            VruClass::EScooter => "e_scooter",
            VruClass::EWheelchair => "e_wheelchair",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: Rect,
    pub class: VruClass,
    pub conf: f64,
}

/// One keypoint: image position and detector confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

impl From<[f64; 3]> for Keypoint {
    fn from(v: [f64; 3]) -> Self {
        Keypoint { x: v[0], y: v[1], conf: v[2] }
    }
}

impl From<Keypoint> for [f64; 3] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y, k.conf]
    }
}

impl Keypoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDetection {
    pub bbox: Rect,
    pub kps: Vec<Keypoint>,
}

impl PoseDetection {
    /// The same pose shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> PoseDetection {
        PoseDetection {
            bbox: Rect::new(self.bbox.x + dx, self.bbox.y + dy, self.bbox.w, self.bbox.h),
            kps: self.kps.iter().map(|k| Keypoint { x: k.x + dx, y: k.y + dy, conf: k.conf }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(rename = "frame")]
    pub frame_idx: u64,
    pub ts_ms: u64,
    #[serde(rename = "dets", default)]
    pub detections: Vec<Detection>,
    #[serde(rename = "poses", default)]
    pub crop_poses: Vec<PoseDetection>,
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn check_rect(r: &Rect, what: &str) -> std::result::Result<(), String> {
    if ![r.x, r.y, r.w, r.h].iter().all(|v| v.is_finite()) {
        return Err(format!("{what} bbox has non-finite values"));
    }
    if r.w <= 0.0 || r.h <= 0.0 {
        return Err(format!("{what} bbox must have positive width and height"));
    }
    Ok(())
}

impl FrameRecord {
    /// Checks per-record invariants (box sizes, confidences, keypoint count).
    pub fn validate(&self) -> std::result::Result<(), String> {
        for d in &self.detections {
            check_rect(&d.bbox, "detection")?;
            if !unit(d.conf) {
                return Err(format!("detection confidence {} outside [0, 1]", d.conf));
            }
        }
        for p in &self.crop_poses {
            check_rect(&p.bbox, "pose")?;
            if p.kps.len() != KEYPOINTS {
                return Err(format!("pose has {} keypoints, expected {KEYPOINTS}", p.kps.len()));
            }
            if let Some(k) = p.kps.iter().find(|k| !unit(k.conf) || !k.x.is_finite() || !k.y.is_finite()) {
                return Err(format!("invalid keypoint {:?}", <[f64; 3]>::from(*k)));
            }
        }
        Ok(())
    }
}

/// Streaming reader over a line-delimited record file. Blank lines are skipped.
pub struct FrameReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    last: Option<(u64, u64)>,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, last: None }
    }
}

impl FrameReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            let fail = |msg: String| Some(Err(Error::Record { line: line_no, msg }));
            let rec: FrameRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return fail(e.to_string()),
            };
            if let Err(msg) = rec.validate() {
                return fail(msg);
            }
            if let Some((frame, ts)) = self.last {
                if rec.frame_idx <= frame {
                    return fail(format!("frame {} does not follow frame {frame}", rec.frame_idx));
                }
                if rec.ts_ms < ts {
                    return fail(format!("timestamp {} precedes {ts}", rec.ts_ms));
                }
            }
            self.last = Some((rec.frame_idx, rec.ts_ms));
            return Some(Ok(rec));
        }
    }
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    FrameReader::open(path)?.collect()
}

pub fn read_stream_from<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>> {
    FrameReader::new(reader).collect()
}

pub fn write_stream<W: Write>(records: &[FrameRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
