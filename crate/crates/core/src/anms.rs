//! Asynchronous non-maximum suppression.
//!
//! The filter keeps two global per-polarity surfaces: the SAE (latest
//! timestamp) and the SSAE (latest corner score). For each incoming corner
//! event it decays the scores in a local window by
//! `exp(-(t - SAE) / (k * tau))` and keeps the event only if its own value is
//! the window maximum. `tau` adapts to the local event rate: it is the mean
//! age of the most recent neighbours in the window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, Grid, SurfaceState, Timestamp, NEVER};

/// Which events feed the timestamps the decay is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaePolicy {
    /// The detector-facing SAE, stamped by every event.
    #[default]
    AllEvents,
    /// A private SAE stamped only by corner events.
    CornersOnly,
}

impl std::str::FromStr for SaePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-events" | "all" => Ok(SaePolicy::AllEvents),
            "corners-only" | "corners" => Ok(SaePolicy::CornersOnly),
            other => Err(Error::Config(format!(
                "unknown sae policy `{other}` (expected all-events or corners-only)"
            ))),
        }
    }
}

impl std::fmt::Display for SaePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SaePolicy::AllEvents => "all-events",
            SaePolicy::CornersOnly => "corners-only",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnmsConfig {
    /// Half side of the square suppression window (4 gives 9x9).
    pub window_radius: u32,
    /// Decay multiplier applied to tau.
    pub k: f64,
    /// Seconds; used when the window holds no earlier event.
    pub tau_fallback: f64,
    /// How many of the newest window timestamps are averaged into tau.
    pub tau_neighbors: usize,
    pub sae_policy: SaePolicy,
}

impl Default for AnmsConfig {
    fn default() -> Self {
        AnmsConfig {
            window_radius: 4,
            k: 20.0,
            tau_fallback: 0.05,
            tau_neighbors: 5,
            sae_policy: SaePolicy::AllEvents,
        }
    }
}

impl AnmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::Config("anms.window_radius must be >= 1".into()));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config("anms.k must be > 0".into()));
        }
        if !(self.tau_fallback > 0.0 && self.tau_fallback.is_finite()) {
            return Err(Error::Config("anms.tau_fallback must be > 0".into()));
        }
        if self.tau_neighbors < 1 {
            return Err(Error::Config("anms.tau_neighbors must be >= 1".into()));
        }
        Ok(())
    }
}

/// `exp(-age / (k * tau))`, all in seconds. Floored at the smallest normal
/// `f64` so that very old cells never decay to exactly zero.
pub fn decay_coefficient(age: f64, k: f64, tau: f64) -> f64 {
    (-age / (k * tau)).exp().max(f64::MIN_POSITIVE)
}

/// Decay for an integer-microsecond age against a time constant in microseconds.
#[inline]
fn decay_us(age_us: Timestamp, ktau_us: f64) -> f64 {
    (-(age_us as f64) / ktau_us).exp().max(f64::MIN_POSITIVE)
}

/// Decayed scores around one event, clipped cells read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayedWindow {
    pub radius: u32,
    /// `(2r+1)^2` values, row-major, centered on the event.
    pub values: Vec<f64>,
    pub center: f64,
}

impl DecayedWindow {
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    /// Value at window offset `(dx, dy)`.
    pub fn at(&self, dx: i32, dy: i32) -> f64 {
        let r = self.radius as i32;
        self.values[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Clipped window bounds `[x0, x1] x [y0, y1]` around `e`.
#[inline]
fn window_bounds(state: &SurfaceState, e: &Event, r: u32) -> (usize, usize, usize, usize) {
    let (x, y) = (u32::from(e.x), u32::from(e.y));
    (
        x.saturating_sub(r) as usize,
        (x + r).min(state.width() - 1) as usize,
        y.saturating_sub(r) as usize,
        (y + r).min(state.height() - 1) as usize,
    )
}

#[derive(Clone, Debug)]
pub struct AnmsFilter {
    cfg: AnmsConfig,
    /// Private SAE for [`SaePolicy::CornersOnly`].
    corner_sae: Option<[Grid<Timestamp>; 2]>,
    neighbors: Vec<Timestamp>,
}

impl AnmsFilter {
    pub fn new(cfg: AnmsConfig, width: u32, height: u32) -> Result<Self> {
        cfg.validate()?;
        let corner_sae = match cfg.sae_policy {
            SaePolicy::AllEvents => None,
            SaePolicy::CornersOnly => {
                let (w, h) = (width as usize, height as usize);
                Some([Grid::new(w, h, NEVER), Grid::new(w, h, NEVER)])
            }
        };
        Ok(AnmsFilter {
            neighbors: Vec::with_capacity(cfg.tau_neighbors + 1),
            cfg,
            corner_sae,
        })
    }

    pub fn config(&self) -> &AnmsConfig {
        &self.cfg
    }

    #[inline]
    fn sae_view<'a>(&'a self, state: &'a SurfaceState, e: &Event) -> &'a Grid<Timestamp> {
        match &self.corner_sae {
            Some(g) => &g[e.p.index()],
            None => state.sae_grid(e.p),
        }
    }

    /// Adaptive tau in microseconds, floored at one tick.
    fn tau_us(&mut self, state: &SurfaceState, e: &Event) -> f64 {
        let (x0, x1, y0, y1) = window_bounds(state, e, self.cfg.window_radius);
        let n = self.cfg.tau_neighbors;
        let mut newest = std::mem::take(&mut self.neighbors);
        newest.clear();
        let sae = self.sae_view(state, e);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let t = sae.get(x, y);
                if t == NEVER || (newest.len() == n && t <= newest[n - 1]) {
                    continue;
                }
                if x == e.x as usize && y == e.y as usize {
                    continue;
                }
                // newest stays sorted, newest first
                let at = newest.partition_point(|&o| o >= t);
                if newest.len() == n {
                    newest.pop();
                }
                newest.insert(at, t);
            }
        }
        let tau = if newest.is_empty() {
            self.cfg.tau_fallback * 1e6
        } else {
            let sum: Timestamp = newest.iter().map(|&t| e.t - t).sum();
            sum as f64 / newest.len() as f64
        };
        self.neighbors = newest;
        tau.max(1.0)
    }

    /// Seconds. `state` (and the filter) must already hold `e`.
    pub fn compute_tau(&mut self, state: &SurfaceState, e: &Event) -> f64 {
        self.tau_us(state, e) * 1e-6
    }

    /// Materializes the decayed window for `e` given tau in seconds.
    pub fn decayed_window(&self, state: &SurfaceState, e: &Event, tau: f64) -> DecayedWindow {
        let r = self.cfg.window_radius;
        let ktau_us = (self.cfg.k * tau * 1e6).max(1.0);
        let side = 2 * r as usize + 1;
        let mut values = vec![0.0; side * side];
        let (x0, x1, y0, y1) = window_bounds(state, e, r);
        let sae = self.sae_view(state, e);
        let ssae = state.ssae_grid(e.p);
        let (ox, oy) = (e.x as usize + r as usize, e.y as usize + r as usize);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let t = sae.get(x, y);
                if t == NEVER {
                    continue;
                }
                values[(y + side - 1 - oy) * side + (x + side - 1 - ox)] =
                    decay_us(e.t - t, ktau_us) * ssae.get(x, y);
            }
        }
        let center = values[(side * side) / 2];
        DecayedWindow { radius: r, values, center }
    }

    /// Records `(e, score)` in the surfaces and decides whether `e` survives.
    ///
    /// `e` must come from the upstream detector with `score >= 0`, and the
    /// shared SAE must already contain it. Ties keep the event.
    pub fn process_corner_event(&mut self, state: &mut SurfaceState, e: &Event, score: f64) -> bool {
        debug_assert!(score >= 0.0, "negative corner score {score}");
        match &mut self.corner_sae {
            Some(g) => {
                g[e.p.index()].set(e.x as usize, e.y as usize, e.t);
                state.set_ssae(e, score);
            }
            None => state.set_both(e, score),
        }

        let ktau_us = (self.cfg.k * self.tau_us(state, e)).max(1.0);
        let center = decay_us(0, ktau_us) * score;

        let (x0, x1, y0, y1) = window_bounds(state, e, self.cfg.window_radius);
        let sae = self.sae_view(state, e);
        let ssae = state.ssae_grid(e.p);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let s = ssae.get(x, y);
                // a zero score cannot beat a non-negative center
                if s <= center {
                    continue;
                }
                let t = sae.get(x, y);
                if t == NEVER {
                    continue;
                }
                if decay_us(e.t - t, ktau_us) * s > center {
                    return false;
                }
            }
        }
        true
    }
}
