//! Streaming engine: tracking, feature windows, inference, the per-track
//! monitoring state machine and I2V alert emission.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::net::{ToSocketAddrs, UdpSocket};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feat::{FeatureExtractor, FeatureWindow, LAYOUT_HASH};
use crate::geom::{Crosswalk, IntersectionGeometry, ZoneKind};
use crate::ingest::{FrameReader, FrameRecord, VruClass};
use crate::nn::{ModelParams, Prediction};
use crate::scalar::Scalar;
use crate::track::{Track, Tracker};

/// Minimum `|p_B - 0.5|` for a prediction to count as confident.
pub const ALERT_MARGIN: f64 = 0.2;
pub const ALERT_SCHEMA: &str = "crosswise/1";
pub const ALERT_MSG_TYPE: &str = "VRU_CROSSING_ALERT";
pub const SEND_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Idle,
    Observing,
    Predicted,
    Crossing,
    Done,
}

impl TrackState {
    fn rank(self) -> u8 {
        match self {
            TrackState::Idle => 0,
            TrackState::Observing | TrackState::Predicted => 1,
            TrackState::Crossing => 2,
            TrackState::Done => 3,
        }
    }

    /// Whether `self -> to` is a legal transition.
    pub fn can_move_to(self, to: TrackState) -> bool {
        use TrackState::*;
        match (self, to) {
            (Observing, Predicted) | (Predicted, Observing) => true,
            (Idle, Predicted) => false,
            _ => to.rank() > self.rank(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertTrigger {
    /// A confident prediction.
    #[default]
    Prediction,
    /// The track stepped into a start-crossing zone.
    StartCrossing,
    /// The track entered a crosswalk without an earlier alert for it.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct I2VAlert {
    pub msg_type: String,
    pub track_id: u64,
    pub crosswalk: Crosswalk,
    pub prob: f64,
    pub ts_ms: u64,
    pub frame_idx: u64,
    pub vru_class: VruClass,
    #[serde(skip)]
    pub trigger: AlertTrigger,
}

impl I2VAlert {
    /// One UDP datagram body.
    pub fn to_wire(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Wire<'a> {
            schema: &'static str,
            #[serde(flatten)]
            alert: &'a I2VAlert,
        }
        Ok(serde_json::to_string(&Wire { schema: ALERT_SCHEMA, alert: self })?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    pub track_id: u64,
    pub frame_idx: u64,
    pub from: TrackState,
    pub to: TrackState,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub predictions: Vec<Prediction>,
    pub alerts: Vec<I2VAlert>,
    pub deltas: Vec<StateDelta>,
    pub windows: Vec<FeatureWindow>,
    pub spawned: Vec<u64>,
    /// `(track_id, pose index)` pose assignments of this frame.
    pub pose_merges: Vec<(u64, usize)>,
    pub retired: Vec<Track>,
}

#[derive(Debug, Clone)]
struct Monitor {
    state: TrackState,
    class: VruClass,
    latest: Option<Prediction>,
    alerted: BTreeSet<Crosswalk>,
}

/// Single-camera engine. `T` is the inference precision.
pub struct Engine<T: Scalar = f32> {
    geometry: IntersectionGeometry,
    tracker: Tracker,
    features: FeatureExtractor,
    model: Option<ModelParams<T>>,
    monitors: BTreeMap<u64, Monitor>,
    last_frame: Option<u64>,
}

impl<T: Scalar> Engine<T> {
    /// `model = None` runs tracking and feature extraction only.
    pub fn new(geometry: &IntersectionGeometry, model: Option<ModelParams<T>>) -> Result<Self> {
        geometry.validate()?;
        if let Some(m) = &model {
            m.check_layout(LAYOUT_HASH)?;
        }
        Ok(Self {
            geometry: geometry.clone(),
            tracker: Tracker::new(geometry),
            features: FeatureExtractor::new(geometry),
            model,
            monitors: BTreeMap::new(),
            last_frame: None,
        })
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn state(&self, track_id: u64) -> Option<TrackState> {
        self.monitors.get(&track_id).map(|m| m.state)
    }

    pub fn model(&self) -> Option<&ModelParams<T>> {
        self.model.as_ref()
    }

    pub fn step(&mut self, frame: &FrameRecord) -> Result<StepOutput> {
        if let Some(last) = self.last_frame {
            if frame.frame_idx <= last {
                return Err(Error::OutOfOrder { last, got: frame.frame_idx });
            }
        }
        self.last_frame = Some(frame.frame_idx);
        let f = frame.frame_idx;
        let mut out = StepOutput::default();

        let assoc = self.tracker.associate(&frame.detections, f);
        out.spawned = assoc.spawned;
        out.pose_merges = self.tracker.merge_pose(&frame.crop_poses, f);

        // newest window per track wins if several are pending
        let mut pending: HashMap<u64, FeatureWindow> = HashMap::new();
        for t in self.tracker.tracks() {
            if let Some(w) = self.features.observe(t, f) {
                pending.insert(t.track_id, w);
            }
        }
        let mut windows: Vec<FeatureWindow> = pending.into_values().collect();
        windows.sort_by_key(|w| w.track_id);
        if let Some(m) = &self.model {
            if !windows.is_empty() {
                out.predictions = m.predict(&windows)?;
            }
        }
        out.windows = windows;

        let preds: HashMap<u64, Prediction> = out.predictions.iter().map(|p| (p.track_id, p.clone())).collect();
        for t in self.tracker.tracks() {
            let mon = self.monitors.entry(t.track_id).or_insert_with(|| Monitor {
                state: TrackState::Idle,
                class: t.class,
                latest: None,
                alerted: BTreeSet::new(),
            });
            mon.class = t.class;
            Self::advance(&self.geometry, mon, t, preds.get(&t.track_id), frame, &mut out);
        }

        for t in assoc.retired {
            self.features.forget(t.track_id);
            if let Some(mon) = self.monitors.remove(&t.track_id) {
                out.deltas.push(StateDelta { track_id: t.track_id, frame_idx: f, from: mon.state, to: TrackState::Done });
            }
            out.retired.push(t);
        }
        Ok(out)
    }

    fn advance(
        g: &IntersectionGeometry,
        mon: &mut Monitor,
        t: &Track,
        pred: Option<&Prediction>,
        frame: &FrameRecord,
        out: &mut StepOutput,
    ) {
        let f = frame.frame_idx;
        let go = |mon: &mut Monitor, to: TrackState, out: &mut StepOutput| {
            if mon.state != to && mon.state.can_move_to(to) {
                out.deltas.push(StateDelta { track_id: t.track_id, frame_idx: f, from: mon.state, to });
                mon.state = to;
            }
        };
        let alert = |mon: &mut Monitor, label: Crosswalk, prob: f64, trigger: AlertTrigger, out: &mut StepOutput| {
            if mon.alerted.insert(label) {
                out.alerts.push(I2VAlert {
                    msg_type: ALERT_MSG_TYPE.to_string(),
                    track_id: t.track_id,
                    crosswalk: label,
                    prob,
                    ts_ms: frame.ts_ms,
                    frame_idx: f,
                    vru_class: mon.class,
                    trigger,
                });
            }
        };
        let prob_for = |mon: &Monitor, label: Crosswalk| {
            mon.latest.as_ref().map_or(1.0, |p| if label == Crosswalk::B { p.p_b } else { 1.0 - p.p_b })
        };

        if mon.state == TrackState::Idle && t.zone.is_pre_crossing() {
            go(mon, TrackState::Observing, out);
        }

        if let Some(p) = pred {
            mon.latest = Some(p.clone());
            if matches!(mon.state, TrackState::Observing | TrackState::Predicted) {
                if (p.p_b - 0.5).abs() >= ALERT_MARGIN {
                    go(mon, TrackState::Predicted, out);
                    alert(mon, p.label, p.confidence(), AlertTrigger::Prediction, out);
                } else {
                    go(mon, TrackState::Observing, out);
                }
            }
        }

        if t.seen_at(f) {
            if let ZoneKind::StartCrossing(_) = t.zone {
                if mon.alerted.is_empty() {
                    let label = g.zone_label(t.zone).or(mon.latest.as_ref().map(|p| p.label));
                    if let Some(label) = label {
                        let prob = prob_for(mon, label);
                        alert(mon, label, prob, AlertTrigger::StartCrossing, out);
                    }
                }
            }
        }

        if t.zone.is_crossing() && mon.state.rank() < TrackState::Crossing.rank() {
            let was_observing = mon.state == TrackState::Observing;
            go(mon, TrackState::Crossing, out);
            if was_observing && mon.alerted.is_empty() {
                if let Some(label) = g.zone_label(t.zone) {
                    let prob = prob_for(mon, label);
                    alert(mon, label, prob, AlertTrigger::Crossing, out);
                }
            }
        }
    }

    /// Marks every remaining track as done at end of stream.
    pub fn finish(&mut self) -> Vec<StateDelta> {
        let f = self.last_frame.unwrap_or(0);
        for t in self.tracker.drain() {
            self.features.forget(t.track_id);
        }
        std::mem::take(&mut self.monitors)
            .into_iter()
            .map(|(id, m)| StateDelta { track_id: id, frame_idx: f, from: m.state, to: TrackState::Done })
            .collect()
    }
}

/// Destination for alerts.
pub trait AlertSink {
    fn send(&mut self, alert: &I2VAlert) -> Result<()>;
}

impl AlertSink for Vec<I2VAlert> {
    fn send(&mut self, alert: &I2VAlert) -> Result<()> {
        self.push(alert.clone());
        Ok(())
    }
}

/// One JSON datagram per alert.
pub struct UdpAlertSink {
    socket: UdpSocket,
    target: std::net::SocketAddr,
}

impl UdpAlertSink {
    pub fn connect(addr: &str) -> Result<Self> {
        let target = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("cannot resolve {addr}")))?;
        let bind = if target.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" };
        Ok(Self { socket: UdpSocket::bind(bind)?, target })
    }
}

impl AlertSink for UdpAlertSink {
    fn send(&mut self, alert: &I2VAlert) -> Result<()> {
        let body = alert.to_wire()?;
        self.socket.send_to(body.as_bytes(), self.target)?;
        Ok(())
    }
}

/// Tries a send up to [`SEND_ATTEMPTS`] times; failures are logged, never fatal.
pub fn send_with_retry(sink: &mut dyn AlertSink, alert: &I2VAlert) -> bool {
    for attempt in 1..=SEND_ATTEMPTS {
        match sink.send(alert) {
            Ok(()) => return true,
            Err(e) => log::warn!("alert send attempt {attempt}/{SEND_ATTEMPTS} failed: {e}"),
        }
    }
    log::error!("dropping alert for track {} after {SEND_ATTEMPTS} attempts", alert.track_id);
    false
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: u64,
    pub tracks: u64,
    pub windows: u64,
    pub predictions: u64,
    pub alerts: u64,
    pub alerts_dropped: u64,
    pub mean_frame_ms: f64,
    pub max_frame_ms: f64,
}

pub struct RunSinks<'a> {
    pub predictions: &'a mut dyn Write,
    pub alerts: Option<&'a mut dyn AlertSink>,
    pub features: Option<&'a mut dyn Write>,
}

/// Consumes a frame stream to exhaustion. Parsing runs on a reader thread
/// feeding a bounded queue; everything else runs on the caller's thread.
pub fn run<T: Scalar, R: BufRead + Send + 'static>(
    source: R,
    geometry: &IntersectionGeometry,
    model: ModelParams<T>,
    sinks: RunSinks<'_>,
) -> Result<RunSummary> {
    let mut engine = Engine::new(geometry, Some(model))?;
    let (tx, rx) = mpsc::sync_channel::<Result<FrameRecord>>(256);
    let reader = thread::spawn(move || {
        for rec in FrameReader::new(source) {
            let stop = rec.is_err();
            if tx.send(rec).is_err() || stop {
                break;
            }
        }
    });

    let RunSinks { predictions, mut alerts, mut features } = sinks;
    let mut summary = RunSummary::default();
    let mut total_ms = 0.0;
    let mut outcome = Ok(());
    for rec in rx {
        let frame = match rec {
            Ok(f) => f,
            Err(e) => {
                outcome = Err(e);
                break;
            }
        };
        let t0 = Instant::now();
        let out = match engine.step(&frame) {
            Ok(o) => o,
            Err(e) => {
                outcome = Err(e);
                break;
            }
        };
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        total_ms += ms;
        summary.max_frame_ms = summary.max_frame_ms.max(ms);
        summary.frames += 1;
        summary.tracks += out.spawned.len() as u64;
        summary.windows += out.windows.len() as u64;
        for p in &out.predictions {
            serde_json::to_writer(&mut *predictions, p)?;
            predictions.write_all(b"\n")?;
        }
        summary.predictions += out.predictions.len() as u64;
        if let Some(fw) = features.as_deref_mut() {
            for w in &out.windows {
                serde_json::to_writer(&mut *fw, w)?;
                fw.write_all(b"\n")?;
            }
        }
        for a in &out.alerts {
            summary.alerts += 1;
            if let Some(sink) = alerts.as_deref_mut() {
                if !send_with_retry(sink, a) {
                    summary.alerts_dropped += 1;
                }
            }
        }
    }
    engine.finish();
    reader.join().ok();
    outcome?;
    predictions.flush()?;
    if let Some(fw) = features {
        fw.flush()?;
    }
    if summary.frames > 0 {
        summary.mean_frame_ms = total_ms / summary.frames as f64;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub target_tracks: usize,
    pub mean_active_tracks: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: u64,
    pub max_active_tracks: usize,
    pub end_to_end_fps: f64,
    pub forward_p50_ms: f64,
    pub forward_p99_ms: f64,
    pub forward_samples: usize,
    pub dtype: String,
    pub scaling: Vec<ScalingPoint>,
    pub paper_fps: f64,
    pub paper_forward_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Times `engine.step` over the frames; returns (fps, mean active tracks, max active tracks).
pub fn time_stream<T: Scalar>(
    geometry: &IntersectionGeometry,
    model: &ModelParams<T>,
    frames: &[FrameRecord],
) -> Result<(f64, f64, usize)> {
    let mut engine = Engine::new(geometry, Some(model.clone()))?;
    let mut active = 0usize;
    let mut max_active = 0usize;
    let t0 = Instant::now();
    for f in frames {
        engine.step(f)?;
        let n = engine.tracker().tracks().iter().filter(|t| t.seen_at(f.frame_idx)).count();
        active += n;
        max_active = max_active.max(n);
    }
    let secs = t0.elapsed().as_secs_f64().max(1e-9);
    let n = frames.len().max(1) as f64;
    Ok((frames.len() as f64 / secs, active as f64 / n, max_active))
}

/// Median and 99th percentile of single-window forward latency in ms.
pub fn forward_latency<T: Scalar>(model: &ModelParams<T>, window: &FeatureWindow, samples: usize) -> Result<(f64, f64)> {
    let input = vec![window.to_tensor::<T>()];
    for _ in 0..samples.min(50) {
        model.predict_probs(&input)?;
    }
    let mut ms = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t0 = Instant::now();
        std::hint::black_box(model.predict_probs(std::hint::black_box(&input))?);
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    Ok((percentile(&ms, 0.5), percentile(&ms, 0.99)))
}

/// End-to-end and isolated-forward benchmark on generated scenarios.
pub fn bench<T: Scalar>(geometry: &IntersectionGeometry, model: &ModelParams<T>, min_frames: u64, seed: u64) -> Result<BenchReport> {
    use crate::ingest::synth::{generate_scenario, ScenarioSpec};

    let mut n = (min_frames / 40 + 8) as usize;
    let frames = loop {
        let mut spec = ScenarioSpec::new(n, seed).with_noise(2.0, 0.05);
        spec.spawn_gap_s = 2.0;
        let (frames, _) = generate_scenario(&spec, geometry)?;
        if frames.len() as u64 >= min_frames {
            break frames;
        }
        n += n / 2 + 1;
    };
    let (fps, _, max_active) = time_stream(geometry, model, &frames)?;

    let mut scaling = Vec::new();
    for k in [1usize, 2, 5, 10] {
        let mut spec = ScenarioSpec::new(k, seed ^ k as u64).with_noise(2.0, 0.0);
        spec.spawn_gap_s = 0.05;
        let (frames, _) = generate_scenario(&spec, geometry)?;
        let (fps, mean_active, _) = time_stream(geometry, model, &frames)?;
        scaling.push(ScalingPoint { target_tracks: k, mean_active_tracks: mean_active, fps });
    }

    let mut engine: Engine<T> = Engine::new(geometry, None)?;
    let mut window = None;
    for f in &frames {
        if let Some(w) = engine.step(f)?.windows.into_iter().next() {
            window = Some(w);
            break;
        }
    }
    let window = window.ok_or(Error::EmptyDataset)?;
    let samples = 2000;
    let (p50, p99) = forward_latency(model, &window, samples)?;
    Ok(BenchReport {
        frames: frames.len() as u64,
        max_active_tracks: max_active,
        end_to_end_fps: fps,
        forward_p50_ms: p50,
        forward_p99_ms: p99,
        forward_samples: samples,
        dtype: T::DTYPE.to_string(),
        scaling,
        paper_fps: 33.0,
        paper_forward_ms: 0.78,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, Rect};
    use crate::ingest::{Detection, Keypoint, PoseDetection};
    use crate::nn::ModelConfig;

    fn geo() -> IntersectionGeometry {
        IntersectionGeometry::reference_corner()
    }

    fn frame(f: u64, dets: Vec<Detection>, poses: Vec<PoseDetection>) -> FrameRecord {
        FrameRecord { frame_idx: f, ts_ms: f * 50, detections: dets, crop_poses: poses }
    }

    fn det_at(c: Point) -> Detection {
        Detection { bbox: Rect::from_center(c, 24.0, 68.0), class: VruClass::Pedestrian, conf: 0.9 }
    }

    fn pose_at(g: &IntersectionGeometry, c: Point) -> PoseDetection {
        let cr = g.crop_rect;
        PoseDetection {
            bbox: Rect::from_center(Point::new(c.x - cr.x, c.y - cr.y), 24.0, 68.0),
            kps: vec![Keypoint { x: c.x - cr.x, y: c.y - cr.y, conf: 0.9 }; 17],
        }
    }

    /// Weights with every tensor zero except the output bias, so every window gets `sigmoid(bias)`.
    fn constant_model(bias: f64) -> ModelParams<f64> {
        let mut m = ModelParams::<f64>::zeros(ModelConfig::default()).unwrap();
        m.fc2_b.data_mut()[0] = bias;
        m
    }

    #[test]
    fn transitions() {
        use TrackState::*;
        assert!(Idle.can_move_to(Observing));
        assert!(Observing.can_move_to(Predicted) && Predicted.can_move_to(Observing));
        assert!(Predicted.can_move_to(Crossing) && Crossing.can_move_to(Done));
        assert!(!Crossing.can_move_to(Predicted) && !Done.can_move_to(Idle) && !Idle.can_move_to(Predicted));
    }

    #[test]
    fn outside_track_never_predicts() {
        let mut e = Engine::new(&geo(), Some(constant_model(3.0))).unwrap();
        for f in 0..120 {
            let out = e.step(&frame(f, vec![det_at(Point::new(100.0, 100.0))], vec![])).unwrap();
            assert!(out.windows.is_empty() && out.alerts.is_empty() && out.predictions.is_empty());
        }
        assert_eq!(e.state(1), Some(TrackState::Idle));
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let mut e: Engine<f64> = Engine::new(&geo(), None).unwrap();
        e.step(&frame(5, vec![], vec![])).unwrap();
        assert!(matches!(e.step(&frame(5, vec![], vec![])), Err(Error::OutOfOrder { last: 5, got: 5 })));
    }

    #[test]
    fn foreign_layout_is_rejected() {
        let mut m = constant_model(0.0);
        m.layout_hash = "deadbeef".into();
        assert!(matches!(Engine::new(&geo(), Some(m)), Err(Error::LayoutMismatch { .. })));
    }

    #[test]
    fn confident_prediction_alerts_once_per_label() {
        let g = geo();
        let mut e = Engine::new(&g, Some(constant_model(3.0))).unwrap();
        let c = Point::new(850.0, 550.0);
        let mut alerts = Vec::new();
        let mut preds = 0;
        for f in 0..100 {
            let out = e.step(&frame(f, vec![det_at(c)], vec![pose_at(&g, c)])).unwrap();
            preds += out.predictions.len();
            alerts.extend(out.alerts);
        }
        assert_eq!(preds, 6);
        assert_eq!(alerts.len(), 1);
        let a = &alerts[0];
        assert_eq!((a.crosswalk, a.frame_idx, a.trigger), (Crosswalk::B, 49, AlertTrigger::Prediction));
        assert!((a.prob - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-12);
        assert_eq!(e.state(1), Some(TrackState::Predicted));
    }

    #[test]
    fn unsure_prediction_stays_observing() {
        let g = geo();
        let mut e = Engine::new(&g, Some(constant_model(0.5))).unwrap();
        let c = Point::new(850.0, 550.0);
        for f in 0..60 {
            assert!(e.step(&frame(f, vec![det_at(c)], vec![])).unwrap().alerts.is_empty());
        }
        assert_eq!(e.state(1), Some(TrackState::Observing));
    }

    #[test]
    fn start_crossing_alerts_and_crossing_freezes_pose() {
        let g = geo();
        let mut e = Engine::new(&g, Some(constant_model(0.0))).unwrap();
        let mut alerts = Vec::new();
        // 5 px per frame east: start-crossing from frame 20 (x = 1000), crosswalk A from frame 32 (x = 1060)
        for f in 0..=38u64 {
            let c = Point::new(900.0 + 5.0 * f as f64, 550.0);
            let out = e.step(&frame(f, vec![det_at(c)], vec![pose_at(&g, c)])).unwrap();
            assert_eq!(out.spawned.is_empty(), f > 0);
            alerts.extend(out.alerts);
            assert_eq!(!out.pose_merges.is_empty(), f < 32, "frame {f}");
        }
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].trigger, AlertTrigger::StartCrossing);
        assert_eq!(alerts[0].crosswalk, Crosswalk::A);
        assert_eq!(alerts[0].frame_idx, 20);
        assert_eq!(alerts[0].prob, 1.0);
        assert_eq!(e.state(1), Some(TrackState::Crossing));
        assert_eq!(e.tracker().get(1).unwrap().pose_frame, Some(31));
    }

    #[test]
    fn alert_wire_format() {
        let a = I2VAlert {
            msg_type: ALERT_MSG_TYPE.into(),
            track_id: 7,
            crosswalk: Crosswalk::A,
            prob: 0.75,
            ts_ms: 1000,
            frame_idx: 20,
            vru_class: VruClass::EScooter,
            trigger: AlertTrigger::Prediction,
        };
        let v: serde_json::Value = serde_json::from_str(&a.to_wire().unwrap()).unwrap();
        assert_eq!(v["schema"], "crosswise/1");
        assert_eq!(v["msg_type"], "VRU_CROSSING_ALERT");
        assert_eq!(v["crosswalk"], "A");
        assert_eq!(v["vru_class"], "e_scooter");
        assert_eq!(v["track_id"], 7);
        assert!(v.get("trigger").is_none());
    }

    struct Failing(usize);

    impl AlertSink for Failing {
        fn send(&mut self, _: &I2VAlert) -> Result<()> {
            self.0 += 1;
            Err(Error::Io(std::io::Error::other("unreachable")))
        }
    }

    #[test]
    fn failing_sink_is_retried_three_times() {
        let a = I2VAlert {
            msg_type: ALERT_MSG_TYPE.into(),
            track_id: 1,
            crosswalk: Crosswalk::B,
            prob: 1.0,
            ts_ms: 0,
            frame_idx: 0,
            vru_class: VruClass::Pedestrian,
            trigger: AlertTrigger::StartCrossing,
        };
        let mut s = Failing(0);
        assert!(!send_with_retry(&mut s, &a));
        assert_eq!(s.0, SEND_ATTEMPTS);
    }

    #[test]
    fn empty_stream_gives_empty_summary() {
        let mut out = Vec::new();
        let s = run(&b""[..], &geo(), constant_model(0.0), RunSinks { predictions: &mut out, alerts: None, features: None })
            .unwrap();
        assert_eq!(s, RunSummary::default());
        assert!(out.is_empty());
    }
}
