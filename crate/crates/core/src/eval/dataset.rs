//! Labeled feature windows built by running the streaming front end over a
//! recorded scenario, plus the track-grouped train/val/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feat::{FeatureGroup, FeatureWindow};
use crate::geom::{Crosswalk, IntersectionGeometry};
use crate::ingest::synth::{GroundTruth, VruTruth};
use crate::ingest::{read_stream, FrameRecord};
use crate::pipeline::Engine;
use crate::track::Track;

/// Frames of slack between a ground-truth spawn and the tracker's birth frame.
pub const BIRTH_FRAME_SLACK: u64 = 5;
/// Max distance (px) between the true first position and the track's first center.
pub const BIRTH_MATCH_PX: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Ground-truth VRU the window belongs to; the split key.
    pub vru: usize,
    pub label: Crosswalk,
    pub window: FeatureWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Tracks whose birth could not be tied to a ground-truth VRU.
    pub unmatched_tracks: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples, unmatched_tracks: 0 }
    }

    /// Runs tracking and feature extraction over `records` and labels every
    /// window through the track's birth-matched VRU.
    pub fn from_records(records: &[FrameRecord], truth: &GroundTruth, g: &IntersectionGeometry) -> Result<Self> {
        let mut engine: Engine<f32> = Engine::new(g, None)?;
        let mut matcher = BirthMatcher::new(truth);
        let mut samples = Vec::new();
        for rec in records {
            let out = engine.step(rec)?;
            for id in &out.spawned {
                matcher.claim(engine.tracker().get(*id).expect("spawned track is live"));
            }
            for w in out.windows {
                if let Some(v) = matcher.owner(w.track_id) {
                    samples.push(Sample { vru: v.vru, label: v.label, window: w });
                }
            }
        }
        engine.finish();
        let unmatched_tracks = matcher.unmatched();
        if unmatched_tracks > 0 {
            log::debug!("{unmatched_tracks} tracks had no ground-truth match and were dropped");
        }
        Ok(Self { samples, unmatched_tracks })
    }

    pub fn load(stream: impl AsRef<Path>, labels: impl AsRef<Path>, g: &IntersectionGeometry) -> Result<Self> {
        let records = read_stream(stream)?;
        let truth = GroundTruth::load(labels)?;
        Self::from_records(&records, &truth, g)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn vru_count(&self) -> usize {
        self.samples.iter().map(|s| s.vru).collect::<BTreeSet<_>>().len()
    }

    /// sha256 over the canonical JSON of every sample, in order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(serde_json::to_vec(s).expect("sample serializes"));
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn count_label(&self, label: Crosswalk) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

/// Ties tracker tracks to ground-truth VRUs by spawn time and first position.
/// Each VRU is claimed by at most one track; later fragments stay unmatched.
pub struct BirthMatcher<'a> {
    truth: &'a GroundTruth,
    owners: BTreeMap<u64, Option<usize>>,
    claimed: BTreeSet<usize>,
}

impl<'a> BirthMatcher<'a> {
    pub fn new(truth: &'a GroundTruth) -> Self {
        Self { truth, owners: BTreeMap::new(), claimed: BTreeSet::new() }
    }

    /// Call once per newly spawned track; returns the matched VRU.
    pub fn claim(&mut self, track: &Track) -> Option<&'a VruTruth> {
        let best = self
            .truth
            .vrus
            .iter()
            .enumerate()
            .filter(|(_, v)| !self.claimed.contains(&v.vru))
            .filter(|(_, v)| v.spawn_frame.abs_diff(track.birth_frame) <= BIRTH_FRAME_SLACK)
            .map(|(i, v)| (v.first_center.dist(track.first_center), v.vru, i))
            .filter(|(d, _, _)| *d <= BIRTH_MATCH_PX)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let idx = best.map(|(_, vru, i)| {
            self.claimed.insert(vru);
            i
        });
        self.owners.insert(track.track_id, idx);
        idx.map(|i| &self.truth.vrus[i])
    }

    pub fn owner(&self, track_id: u64) -> Option<&'a VruTruth> {
        self.owners.get(&track_id).copied().flatten().map(|i| &self.truth.vrus[i])
    }

    pub fn unmatched(&self) -> usize {
        self.owners.values().filter(|v| v.is_none()).count()
    }
}

/// Windows grouped so that no VRU appears in two parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Splits {
    /// Copy with every window reduced to the slots of `keep`.
    pub fn masked(&self, keep: &[FeatureGroup]) -> Splits {
        let m = |v: &[Sample]| {
            v.iter().map(|s| Sample { window: s.window.masked(keep), ..s.clone() }).collect::<Vec<_>>()
        };
        Splits { train: m(&self.train), val: m(&self.val), test: m(&self.test) }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Shuffles VRU ids with `seed` and assigns them 70/15/15.
pub fn split_by_track(data: &Dataset, seed: u64) -> Result<Splits> {
    split_with(data, (0.70, 0.15), seed)
}

pub fn split_with(data: &Dataset, (train_frac, val_frac): (f64, f64), seed: u64) -> Result<Splits> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ids: Vec<usize> = data.samples.iter().map(|s| s.vru).collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train.min(n));
    let part: BTreeMap<usize, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, if i < n_train { 0 } else if i < n_train + n_val { 1 } else { 2 }))
        .collect();
    let mut parts: [Vec<Sample>; 3] = Default::default();
    for s in &data.samples {
        parts[part[&s.vru]].push(s.clone());
    }
    let [train, val, test] = parts;
    for (name, p) in [("train", &train), ("validation", &val), ("test", &test)] {
        if p.is_empty() {
            return Err(Error::EmptySplit(name));
        }
    }
    Ok(Splits { train, val, test })
}
