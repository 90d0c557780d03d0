//! Labeling events against intensity-corner trajectories.
//!
//! An event is labeled by its distance, at its own timestamp, to the closest
//! live trajectory: within 1 px it is a positive, within (1, 5] px a negative,
//! and anything farther (or with no live track) is discarded.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::{EvHarris, EvHarrisConfig};
use crate::error::{Error, Result};
use crate::event::{Event, Timestamp};
use crate::io::format_seconds;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Natural cubic spline per coordinate.
    Cubic,
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "cubic" => Ok(Interpolation::Cubic),
            other => Err(Error::Config(format!(
                "unknown interpolation `{other}` (expected linear or cubic)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: Timestamp,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: u64,
    samples: Vec<TrackSample>,
    /// Second derivatives of x(t), y(t) at the knots, for cubic interpolation.
    curvature: Option<(Vec<f64>, Vec<f64>)>,
}

impl Track {
    /// Builds a track; `samples` must be strictly increasing in `t`.
    pub fn new(id: u64, samples: Vec<TrackSample>, interpolation: Interpolation) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config(format!("track {id} has no samples")));
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(Error::Config(format!(
                "track {id}: sample times not strictly increasing at t={}s",
                format_seconds(w[1].t)
            )));
        }
        let curvature = match interpolation {
            Interpolation::Cubic if samples.len() >= 3 => {
                let ts: Vec<f64> = samples.iter().map(|s| s.t as f64).collect();
                let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
                let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
                Some((natural_spline(&ts, &xs), natural_spline(&ts, &ys)))
            }
            _ => None,
        };
        Ok(Track {
            id,
            samples,
            curvature,
        })
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn span(&self) -> (Timestamp, Timestamp) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    /// Position at `t`, or `None` outside the track's time span.
    pub fn position(&self, t: Timestamp) -> Option<(f64, f64)> {
        let (t0, t1) = self.span();
        if t < t0 || t > t1 {
            return None;
        }
        let i = match self.samples.binary_search_by_key(&t, |s| s.t) {
            Ok(i) => return Some((self.samples[i].x, self.samples[i].y)),
            Err(i) => i - 1,
        };
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let h = (b.t - a.t) as f64;
        let u = (t - a.t) as f64 / h;
        Some(match &self.curvature {
            None => (a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)),
            Some((mx, my)) => (
                spline_eval(a.x, b.x, mx[i], mx[i + 1], u, h),
                spline_eval(a.y, b.y, my[i], my[i + 1], u, h),
            ),
        })
    }
}

/// Second derivatives of the natural cubic spline through `(ts, vs)`.
fn natural_spline(ts: &[f64], vs: &[f64]) -> Vec<f64> {
    let n = ts.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal system for interior knots, Thomas algorithm
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        let h0 = ts[i] - ts[i - 1];
        let h1 = ts[i + 1] - ts[i];
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
    }
    for j in 1..k {
        let lower = ts[j + 1] - ts[j];
        let w = lower / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    m
}

#[inline]
fn spline_eval(va: f64, vb: f64, ma: f64, mb: f64, u: f64, h: f64) -> f64 {
    let a = 1.0 - u;
    a * va + u * vb + ((a * a * a - a) * ma + (u * u * u - u) * mb) * h * h / 6.0
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectorySet {
    pub tracks: Vec<Track>,
}

impl TrajectorySet {
    pub fn new(tracks: Vec<Track>) -> Self {
        TrajectorySet { tracks }
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Rejects samples outside `[0, width-1] x [0, height-1]`.
    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        for tr in &self.tracks {
            for s in &tr.samples {
                let ok = s.x >= 0.0
                    && s.y >= 0.0
                    && s.x <= f64::from(width - 1)
                    && s.y <= f64::from(height - 1);
                if !ok {
                    return Err(Error::Config(format!(
                        "track {} leaves the {width}x{height} sensor at t={}s",
                        tr.id,
                        format_seconds(s.t)
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV `track_id,t_seconds,x,y`, with or without a header row. Rows of one
    /// track may be interleaved with others but must be in time order.
    pub fn read_csv<R: Read>(reader: R, interpolation: Interpolation) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(reader);
        let mut grouped: BTreeMap<u64, Vec<TrackSample>> = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(i + 1, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(i + 1, |p| p.line() as usize);
            if i == 0 && rec.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
                continue;
            }
            if rec.len() != 4 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 4 fields, found {}", rec.len()),
                });
            }
            let num = |k: usize, what: &str| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("bad {what} `{}`", &rec[k]),
                    })
            };
            let id: u64 = rec[0].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad track_id `{}`", &rec[0]),
            })?;
            let t = num(1, "t_seconds")?;
            if t < 0.0 {
                return Err(Error::Parse {
                    line,
                    msg: "negative t_seconds".into(),
                });
            }
            grouped.entry(id).or_default().push(TrackSample {
                t: (t * 1e6).round() as Timestamp,
                x: num(2, "x")?,
                y: num(3, "y")?,
            });
        }
        let tracks = grouped
            .into_iter()
            .map(|(id, s)| Track::new(id, s, interpolation))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectorySet { tracks })
    }

    pub fn read_csv_file(path: impl AsRef<Path>, interpolation: Interpolation) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), interpolation)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "track_id,t_seconds,x,y")?;
        for tr in &self.tracks {
            for s in &tr.samples {
                writeln!(w, "{},{},{:.6},{:.6}", tr.id, format_seconds(s.t), s.x, s.y)?;
            }
        }
        w.flush()
    }

    /// Distance from `(x, y)` to the nearest track alive at `t`.
    pub fn nearest_distance(&self, x: f64, y: f64, t: Timestamp) -> Option<f64> {
        self.tracks
            .iter()
            .filter_map(|tr| tr.position(t))
            .map(|(px, py)| (px - x).hypot(py - y))
            .min_by(f64::total_cmp)
    }
}

pub fn trajectory_position(track: &Track, t: Timestamp) -> Option<(f64, f64)> {
    track.position(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventLabel {
    Positive,
    Negative,
    Discarded,
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventLabel::Positive => "positive",
            EventLabel::Negative => "negative",
            EventLabel::Discarded => "discarded",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    /// Pixels; `[0, positive]` is a positive.
    pub positive: f64,
    /// Pixels; `(positive, negative]` is a negative.
    pub negative: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        LabelThresholds {
            positive: 1.0,
            negative: 5.0,
        }
    }
}

impl LabelThresholds {
    pub fn classify(&self, distance: Option<f64>) -> EventLabel {
        match distance {
            Some(d) if d <= self.positive => EventLabel::Positive,
            Some(d) if d <= self.negative => EventLabel::Negative,
            _ => EventLabel::Discarded,
        }
    }
}

/// Label plus the distance it was derived from (`None` with no live track).
pub fn label_event(
    e: &Event,
    trajectories: &TrajectorySet,
    thresholds: &LabelThresholds,
) -> (EventLabel, Option<f64>) {
    let d = trajectories.nearest_distance(f64::from(e.x), f64::from(e.y), e.t);
    (thresholds.classify(d), d)
}

/// Time span over which labels and metrics are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EvalWindow {
    All,
    /// Inclusive microsecond bounds.
    Span { start: Timestamp, end: Timestamp },
}

/// Nominal intensity frame rate used to express frame indices in seconds.
pub const DEFAULT_FRAME_RATE: f64 = 24.0;

impl Default for EvalWindow {
    /// Frames 100 to 400 at the nominal frame rate.
    fn default() -> Self {
        EvalWindow::frames(100, 400, DEFAULT_FRAME_RATE)
    }
}

impl EvalWindow {
    pub fn frames(first: u32, last: u32, fps: f64) -> Self {
        EvalWindow::Span {
            start: (f64::from(first) / fps * 1e6).round() as Timestamp,
            end: (f64::from(last) / fps * 1e6).round() as Timestamp,
        }
    }

    #[inline]
    pub fn contains(&self, t: Timestamp) -> bool {
        match *self {
            EvalWindow::All => true,
            EvalWindow::Span { start, end } => t >= start && t <= end,
        }
    }

    /// Duration in microseconds, resolving `All` against the stream's span.
    pub fn duration(&self, events: &[Event]) -> Timestamp {
        match *self {
            EvalWindow::Span { start, end } => end - start,
            EvalWindow::All => match (events.first(), events.last()) {
                (Some(a), Some(b)) => b.t - a.t,
                _ => 0,
            },
        }
    }
}

impl FromStr for EvalWindow {
    type Err = Error;

    /// `all`, `frames:A-B` (at the nominal frame rate) or `S..E` in seconds.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad eval window `{s}` (all | frames:A-B | S..E)"));
        if s == "all" {
            return Ok(EvalWindow::All);
        }
        if let Some(r) = s.strip_prefix("frames:") {
            let (a, b) = r.split_once('-').ok_or_else(bad)?;
            let (a, b) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            return Ok(EvalWindow::frames(a, b, DEFAULT_FRAME_RATE));
        }
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let a: f64 = a.parse().map_err(|_| bad())?;
        let b: f64 = b.parse().map_err(|_| bad())?;
        if !(a >= 0.0 && b >= a) {
            return Err(bad());
        }
        Ok(EvalWindow::Span {
            start: (a * 1e6).round() as Timestamp,
            end: (b * 1e6).round() as Timestamp,
        })
    }
}

impl fmt::Display for EvalWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalWindow::All => f.write_str("all"),
            EvalWindow::Span { start, end } => {
                write!(f, "{}..{}", format_seconds(*start), format_seconds(*end))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScore {
    pub positives: u64,
    pub count_per_frame: f64,
    /// Mean evHarris response over positives; `None` without positives.
    pub mean_score: Option<f64>,
}

/// Everything besides the inputs that ground-truth scoring depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthOptions {
    pub thresholds: LabelThresholds,
    pub window: EvalWindow,
    /// Seconds per intensity frame, for the per-frame count.
    pub frame_period: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for GroundTruthOptions {
    fn default() -> Self {
        GroundTruthOptions {
            thresholds: LabelThresholds::default(),
            window: EvalWindow::default(),
            frame_period: 1.0 / DEFAULT_FRAME_RATE,
            width: crate::event::DEFAULT_WIDTH,
            height: crate::event::DEFAULT_HEIGHT,
        }
    }
}

/// Replays evHarris over the stream and averages its response on the
/// positive-labeled events inside the evaluation window.
pub fn score_ground_truth(
    events: &[Event],
    trajectories: &TrajectorySet,
    evharris: &EvHarrisConfig,
    opts: &GroundTruthOptions,
) -> Result<GroundTruthScore> {
    let (thresholds, window, frame_period) = (&opts.thresholds, opts.window, opts.frame_period);
    let mut h = EvHarris::new(evharris.clone(), opts.width, opts.height)?;
    let mut positives = 0u64;
    let mut scored = 0u64;
    let mut sum = 0.0;
    for e in events {
        h.push(e);
        if !window.contains(e.t) {
            continue;
        }
        if label_event(e, trajectories, thresholds).0 != EventLabel::Positive {
            continue;
        }
        positives += 1;
        if let Some(r) = h.response_at(e.p, e.x, e.y) {
            sum += r;
            scored += 1;
        }
    }
    let frames = window.duration(events) as f64 * 1e-6 / frame_period;
    Ok(GroundTruthScore {
        positives,
        count_per_frame: if frames > 0.0 { positives as f64 / frames } else { 0.0 },
        mean_score: (scored > 0).then(|| sum / scored as f64),
    })
}

/// `t,x,y,p,label,distance` rows, distance empty when no track was live.
pub fn write_labels<W: Write>(
    mut w: W,
    events: &[Event],
    labels: &[(EventLabel, Option<f64>)],
) -> std::io::Result<()> {
    writeln!(w, "t,x,y,p,label,distance")?;
    for (e, (label, d)) in events.iter().zip(labels) {
        let d = d.map(|d| format!("{d:.6}")).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", format_seconds(e.t), e.x, e.y, e.p.bit(), label, d)?;
    }
    w.flush()
}
