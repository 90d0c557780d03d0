//! Asynchronous corner detectors.
//!
//! Every detector produces a verdict plus a score for each event it can
//! evaluate; events too close to the border are reported as skipped (`None`).

pub mod circle;
pub mod fast;
pub mod harris;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use circle::{fast_corner_score, segment_circle, SegmentationResult, Split};
pub use fast::{arc_fast_detect, ev_fast_detect, segment_event};
pub use harris::{EvHarris, EvHarrisConfig};

use crate::error::{Error, Result};
use crate::event::{Event, SurfaceState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionResult {
    pub is_corner: bool,
    /// Harris response for evHarris (may be negative on rejected events),
    /// arc-length score in [18, 36] for the FAST family.
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    EvHarris,
    EvFast,
    ArcFast,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::EvHarris, DetectorKind::EvFast, DetectorKind::ArcFast];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::EvHarris => "evharris",
            DetectorKind::EvFast => "evfast",
            DetectorKind::ArcFast => "arcfast",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "evharris" => Ok(DetectorKind::EvHarris),
            "evfast" => Ok(DetectorKind::EvFast),
            "arcfast" => Ok(DetectorKind::ArcFast),
            other => Err(Error::Config(format!(
                "unknown detector `{other}` (expected evharris, evfast or arcfast)"
            ))),
        }
    }
}

/// A configured detector. The FAST variants are stateless beyond the shared
/// SAE; evHarris carries its own event queue.
#[derive(Clone, Debug)]
pub enum Detector {
    EvHarris(Box<EvHarris>),
    EvFast,
    ArcFast,
}

impl Detector {
    pub fn new(kind: DetectorKind, harris: &EvHarrisConfig, width: u32, height: u32) -> Result<Self> {
        Ok(match kind {
            DetectorKind::EvHarris => {
                Detector::EvHarris(Box::new(EvHarris::new(harris.clone(), width, height)?))
            }
            DetectorKind::EvFast => Detector::EvFast,
            DetectorKind::ArcFast => Detector::ArcFast,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::EvHarris(_) => DetectorKind::EvHarris,
            Detector::EvFast => DetectorKind::EvFast,
            Detector::ArcFast => DetectorKind::ArcFast,
        }
    }

    /// Evaluates `e` against `state`, which must already contain `e`.
    #[inline]
    pub fn detect(&mut self, state: &SurfaceState, e: &Event) -> Option<DetectionResult> {
        match self {
            Detector::EvHarris(h) => h.detect(e),
            Detector::EvFast => ev_fast_detect(state, e),
            Detector::ArcFast => arc_fast_detect(state, e),
        }
    }
}
