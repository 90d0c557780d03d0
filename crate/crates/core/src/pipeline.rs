//! Detector + filter over one stream.

use serde::{Deserialize, Serialize};

use crate::anms::{AnmsConfig, AnmsFilter};
use crate::detectors::{DetectionResult, Detector, DetectorKind, EvHarrisConfig};
use crate::error::Result;
use crate::event::{Event, OrderPolicy, SurfaceState, DEFAULT_HEIGHT, DEFAULT_WIDTH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub width: u32,
    pub height: u32,
    pub detector: DetectorKind,
    pub order_policy: OrderPolicy,
    pub evharris: EvHarrisConfig,
    pub anms: AnmsConfig,
    /// Run the suppression stage at all. Without it the filtered stream equals the raw one.
    pub anms_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            detector: DetectorKind::ArcFast,
            order_policy: OrderPolicy::Reject,
            evharris: EvHarrisConfig::default(),
            anms: AnmsConfig::default(),
            anms_enabled: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_detector(detector: DetectorKind) -> Self {
        PipelineConfig {
            detector,
            ..Default::default()
        }
    }
}

/// What happened to one input event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    /// `None` when the detector skipped the event (border).
    pub detection: Option<DetectionResult>,
    /// Survived the suppression stage (implies accepted).
    pub kept: bool,
}

impl Decision {
    pub fn accepted(&self) -> bool {
        self.detection.is_some_and(|d| d.is_corner)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub events: u64,
    pub skipped: u64,
    pub accepted: u64,
    pub kept: u64,
}

pub struct Pipeline {
    state: SurfaceState,
    detector: Detector,
    anms: Option<AnmsFilter>,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let anms = if cfg.anms_enabled {
            Some(AnmsFilter::new(cfg.anms.clone(), cfg.width, cfg.height)?)
        } else {
            cfg.anms.validate()?;
            None
        };
        Ok(Pipeline {
            state: SurfaceState::with_policy(cfg.width, cfg.height, cfg.order_policy),
            detector: Detector::new(cfg.detector, &cfg.evharris, cfg.width, cfg.height)?,
            anms,
            stats: PipelineStats::default(),
        })
    }

    pub fn state(&self) -> &SurfaceState {
        &self.state
    }

    pub fn stats(&self) -> PipelineStats {
        self.stats
    }

    /// Ingests one event. Errors on out-of-bounds or out-of-order input.
    #[inline]
    pub fn process(&mut self, e: Event) -> Result<(Event, Decision)> {
        let e = self.state.update_sae(e)?;
        self.stats.events += 1;
        let detection = self.detector.detect(&self.state, &e);
        let mut kept = false;
        match detection {
            None => self.stats.skipped += 1,
            Some(d) if d.is_corner => {
                self.stats.accepted += 1;
                kept = match &mut self.anms {
                    Some(f) => f.process_corner_event(&mut self.state, &e, d.score.max(0.0)),
                    None => true,
                };
                self.stats.kept += u64::from(kept);
            }
            Some(_) => {}
        }
        Ok((e, Decision { detection, kept }))
    }
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOutput {
    /// One entry per input event, in input order.
    pub decisions: Vec<Decision>,
    /// Detector-accepted events.
    pub raw: Vec<Event>,
    /// Events that also survived suppression.
    pub kept: Vec<Event>,
    pub stats: PipelineStats,
}

/// Runs a fresh pipeline over a whole in-memory stream.
pub fn run_pipeline(events: &[Event], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut p = Pipeline::new(cfg)?;
    let mut out = PipelineOutput {
        decisions: Vec::with_capacity(events.len()),
        ..Default::default()
    };
    for &e in events {
        let (e, d) = p.process(e)?;
        if d.accepted() {
            out.raw.push(e);
        }
        if d.kept {
            out.kept.push(e);
        }
        out.decisions.push(d);
    }
    out.stats = p.stats();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    fn is_subsequence(sub: &[Event], full: &[Event]) -> bool {
        let mut it = full.iter();
        sub.iter().all(|e| it.any(|f| f == e))
    }

    #[test]
    fn nothing_accepted_nothing_out() {
        // a single event on an empty surface never forms a ring segment
        let events: Vec<Event> = (0..50)
            .map(|i| Event::new(i * 1000, 100, 100, Polarity::Positive))
            .collect();
        for kind in [DetectorKind::EvFast, DetectorKind::ArcFast] {
            let out = run_pipeline(&events, &PipelineConfig::with_detector(kind)).unwrap();
            assert!(out.raw.is_empty());
            assert!(out.kept.is_empty());
        }
    }

    fn trail(score: impl Fn(u16) -> f64) -> (Vec<Event>, Vec<Event>) {
        // feed the filter directly: a two-pixel-wide moving trail
        let cfg = PipelineConfig::default();
        let mut state = SurfaceState::new(cfg.width, cfg.height);
        let mut f = AnmsFilter::new(cfg.anms.clone(), cfg.width, cfg.height).unwrap();
        let mut raw = vec![];
        let mut kept = vec![];
        for i in 0..200u16 {
            let e = state
                .update_sae(Event::new(i64::from(i) * 100, 20 + i / 2, 50 + (i % 2), Polarity::Positive))
                .unwrap();
            raw.push(e);
            if f.process_corner_event(&mut state, &e, score(i)) {
                kept.push(e);
            }
        }
        (raw, kept)
    }

    #[test]
    fn constant_score_trail_is_kept_whole() {
        // a fresh centre is never below a decayed copy of the same score
        let (raw, kept) = trail(|_| 10.0);
        assert_eq!(raw, kept);
    }

    #[test]
    fn uneven_score_trail_is_thinned() {
        let (raw, kept) = trail(|i| if i % 3 == 0 { 30.0 } else { 20.0 });
        assert!(is_subsequence(&kept, &raw));
        assert!(!kept.is_empty());
        assert!(kept.len() < raw.len());
    }

    #[test]
    fn disabled_filter_keeps_all_accepted() {
        let cfg = PipelineConfig {
            width: 41,
            height: 41,
            anms_enabled: false,
            ..PipelineConfig::with_detector(DetectorKind::EvFast)
        };
        let mut p = Pipeline::new(&cfg).unwrap();
        // time surface of a quadrant sweeping toward (20, 20)
        let mut cells = vec![];
        for dy in -8i32..=0 {
            for dx in -8i32..=0 {
                if (dx, dy) != (0, 0) {
                    cells.push((1000 - 10 * i64::from(dx.abs() + dy.abs()), (20 + dx) as u16, (20 + dy) as u16));
                }
            }
        }
        cells.sort();
        for (t, x, y) in cells {
            p.process(Event::new(t, x, y, Polarity::Positive)).unwrap();
        }
        let (_, d) = p.process(Event::new(2000, 20, 20, Polarity::Positive)).unwrap();
        assert!(d.accepted());
        assert!(d.kept);
    }

    #[test]
    fn ordering_errors_propagate() {
        let events = vec![
            Event::new(10, 5, 5, Polarity::Positive),
            Event::new(5, 5, 5, Polarity::Positive),
        ];
        assert!(run_pipeline(&events, &PipelineConfig::default()).is_err());
    }
}
