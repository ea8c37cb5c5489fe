//! Crossing-intention engine for vulnerable road users waiting at an
//! intersection corner: zone geometry, detection ingest, tracking, feature
//! windows, a GRU + self-attention classifier, training and the streaming
//! pipeline that turns predictions into infrastructure-to-vehicle alerts.

pub mod error;
pub mod eval;
pub mod feat;
pub mod geom;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod track;

pub use error::{Error, Result};
pub use feat::{FeatureGroup, FeatureWindow, StepFeatures, FEATURE_DIM, LAYOUT_HASH, STEP_FRAMES, WINDOW_STEPS};
pub use geom::{Crosswalk, IntersectionGeometry, Point, Polygon, Rect, Zone, ZoneKind};
pub use ingest::{Detection, FrameRecord, PoseDetection, VruClass};
pub use nn::{ModelConfig, ModelParams, Prediction};
pub use scalar::Scalar;
pub use track::{Track, Tracker};

pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
