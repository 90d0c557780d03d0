//! Evaluation metrics and the per-event timing harness.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;
use crate::error::Result;
use crate::event::Event;
use crate::ground_truth::{EvalWindow, EventLabel};
use crate::pipeline::{Decision, Pipeline, PipelineConfig};

/// Fraction of input events classified as corners; `None` for an empty stream.
pub fn reduction_rate(n_corner: u64, n_total: u64) -> Option<f64> {
    debug_assert!(n_corner <= n_total);
    (n_total > 0).then(|| n_corner as f64 / n_total as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    #[inline]
    pub fn add(&mut self, label: EventLabel, kept: bool) {
        match (label, kept) {
            (EventLabel::Positive, true) => self.tp += 1,
            (EventLabel::Positive, false) => self.fn_ += 1,
            (EventLabel::Negative, true) => self.fp += 1,
            (EventLabel::Negative, false) => self.tn += 1,
            (EventLabel::Discarded, _) => {}
        }
    }

    pub fn labeled(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.labeled())
    }
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Confusion counts of `kept` decisions against labels; discarded labels are skipped.
pub fn confusion(kept: impl IntoIterator<Item = bool>, labels: &[EventLabel]) -> Confusion {
    let mut c = Confusion::default();
    for (k, &l) in kept.into_iter().zip(labels) {
        c.add(l, k);
    }
    c
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub median_ns_per_event: f64,
    pub mean_ns_per_event: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scene: String,
    pub detector: Option<DetectorKind>,
    pub anms: bool,
    pub n_total: u64,
    pub n_corner: u64,
    pub reduction_rate: Option<f64>,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub accuracy: Option<f64>,
    pub timing: Option<TimingSummary>,
}

impl MetricsReport {
    pub fn new(
        scene: impl Into<String>,
        detector: Option<DetectorKind>,
        anms: bool,
        n_total: u64,
        n_corner: u64,
        confusion: Confusion,
    ) -> Self {
        MetricsReport {
            scene: scene.into(),
            detector,
            anms,
            n_total,
            n_corner,
            reduction_rate: reduction_rate(n_corner, n_total),
            confusion,
            tpr: confusion.tpr(),
            fpr: confusion.fpr(),
            accuracy: confusion.accuracy(),
            timing: None,
        }
    }

    pub const CSV_HEADER: &'static str =
        "scene,detector,anms,n_total,n_corner,reduction_rate,tp,fp,tn,fn,tpr,fpr,accuracy";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scene,
            self.detector.map(|d| d.name()).unwrap_or(""),
            if self.anms { "with" } else { "without" },
            self.n_total,
            self.n_corner,
            opt(self.reduction_rate),
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn_,
            opt(self.tpr),
            opt(self.fpr),
            opt(self.accuracy),
        )
    }
}

/// Scores one pipeline run restricted to `window`.
///
/// With `anms` the survivors of suppression count as corners, otherwise every
/// detector-accepted event does.
pub fn evaluate(
    scene: &str,
    detector: Option<DetectorKind>,
    anms: bool,
    events: &[Event],
    decisions: &[Decision],
    labels: &[EventLabel],
    window: EvalWindow,
) -> MetricsReport {
    let mut n_total = 0;
    let mut n_corner = 0;
    let mut c = Confusion::default();
    for ((e, d), &l) in events.iter().zip(decisions).zip(labels) {
        if !window.contains(e.t) {
            continue;
        }
        let corner = if anms { d.kept } else { d.accepted() };
        n_total += 1;
        n_corner += u64::from(corner);
        c.add(l, corner);
    }
    MetricsReport::new(scene, detector, anms, n_total, n_corner, c)
}

/// Sums counts and combines rates as weighted means (absent rates are left
/// out of their own mean). `None` for an empty list or zero total weight.
pub fn weighted_overall(per_scene: &[(MetricsReport, f64)]) -> Option<MetricsReport> {
    let total_w: f64 = per_scene.iter().map(|(_, w)| *w).sum();
    if per_scene.is_empty() || !(total_w > 0.0) {
        return None;
    }
    let mean = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        let (mut s, mut w) = (0.0, 0.0);
        for (r, wt) in per_scene {
            if let Some(v) = f(r) {
                s += v * wt;
                w += wt;
            }
        }
        (w > 0.0).then(|| s / w)
    };
    let first = &per_scene[0].0;
    let mut confusion = Confusion::default();
    let (mut n_total, mut n_corner) = (0, 0);
    for (r, _) in per_scene {
        n_total += r.n_total;
        n_corner += r.n_corner;
        confusion.tp += r.confusion.tp;
        confusion.fp += r.confusion.fp;
        confusion.tn += r.confusion.tn;
        confusion.fn_ += r.confusion.fn_;
    }
    let same_detector = per_scene.iter().all(|(r, _)| r.detector == first.detector);
    let same_anms = per_scene.iter().all(|(r, _)| r.anms == first.anms);
    Some(MetricsReport {
        scene: "overall".into(),
        detector: if same_detector { first.detector } else { None },
        anms: same_anms && first.anms,
        n_total,
        n_corner,
        reduction_rate: mean(&|r| r.reduction_rate),
        confusion,
        tpr: mean(&|r| r.tpr),
        fpr: mean(&|r| r.fpr),
        accuracy: mean(&|r| r.accuracy),
        timing: None,
    })
}

/// [`weighted_overall`] with each scene weighted by its event count.
pub fn weighted_by_events(per_scene: &[MetricsReport]) -> Option<MetricsReport> {
    let v: Vec<_> = per_scene.iter().map(|r| (r.clone(), r.n_total as f64)).collect();
    weighted_overall(&v)
}

pub const DEFAULT_BENCH_MIN_EVENTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub detector: DetectorKind,
    pub n_events: usize,
    pub repetitions: usize,
    pub without: TimingSummary,
    pub with: TimingSummary,
    pub increase_ns: f64,
    /// `(with - without) / without` on the medians.
    pub increase_rate: f64,
    /// Stream shorter than the configured minimum.
    pub low_confidence: bool,
}

fn time_once(events: &[Event], cfg: &PipelineConfig) -> Result<f64> {
    let mut p = Pipeline::new(cfg)?;
    let start = Instant::now();
    for &e in events {
        black_box(p.process(black_box(e))?);
    }
    let elapsed = start.elapsed();
    black_box(p.stats());
    Ok(elapsed.as_nanos() as f64 / events.len().max(1) as f64)
}

fn summarize(mut v: Vec<f64>) -> TimingSummary {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    TimingSummary {
        median_ns_per_event: median,
        mean_ns_per_event: v.iter().sum::<f64>() / n as f64,
    }
}

/// Per-event processing time with and without suppression.
///
/// Events are in memory before timing starts. One warm pass of each variant
/// is discarded, then the variants alternate for `repetitions` rounds.
pub fn bench(
    events: &[Event],
    cfg: &PipelineConfig,
    repetitions: usize,
    min_events: usize,
) -> Result<BenchReport> {
    let repetitions = repetitions.max(1);
    let with_cfg = PipelineConfig {
        anms_enabled: true,
        ..cfg.clone()
    };
    let without_cfg = PipelineConfig {
        anms_enabled: false,
        ..cfg.clone()
    };
    time_once(events, &without_cfg)?;
    time_once(events, &with_cfg)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..repetitions {
        a.push(time_once(events, &without_cfg)?);
        b.push(time_once(events, &with_cfg)?);
    }
    let without = summarize(a);
    let with = summarize(b);
    let increase_ns = with.median_ns_per_event - without.median_ns_per_event;
    Ok(BenchReport {
        detector: cfg.detector,
        n_events: events.len(),
        repetitions,
        without,
        with,
        increase_ns,
        increase_rate: increase_ns / without.median_ns_per_event,
        low_confidence: events.len() < min_events,
    })
}
