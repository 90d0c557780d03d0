//! Asynchronous corner detection and non-maximum suppression for event cameras.
//!
//! The crate is organized around a single-writer streaming pipeline:
//!
//! - [`event`] – the event model and the per-polarity surfaces (SAE / SSAE).
//! - [`io`] – `events.txt` reading and writing.
//! - [`detectors`] – evHarris, evFAST and ArcFAST, plus the arc-length corner score.
//! - [`anms`] – asynchronous non-maximum suppression on the decayed score surface.
//! - [`pipeline`] – detector + filter wiring over a whole stream.
//! - [`ground_truth`] – trajectory interpolation and distance-based event labeling.
//! - [`metrics`] – reduction rate, confusion counts, weighting and the timing bench.
//! - [`synth`] – moving-polygon scenes with exact corner tracks.
//! - [`config`] – merged key/value configuration used by the command line tool.

pub mod anms;
pub mod config;
pub mod detectors;
pub mod error;
pub mod event;
pub mod ground_truth;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use anms::{AnmsConfig, AnmsFilter, SaePolicy};
pub use detectors::{Detector, DetectorKind, DetectionResult, EvHarrisConfig};
pub use error::{Error, Result};
pub use event::{Event, OrderPolicy, Polarity, SurfaceState, Timestamp, NEVER};
pub use pipeline::{Pipeline, PipelineOutput};
