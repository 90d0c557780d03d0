//! evHarris: Harris response on the binary surface of the most recent events.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::DetectionResult;
use crate::error::{Error, Result};
use crate::event::{Event, Grid, Polarity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvHarrisConfig {
    /// Events per polarity kept in the binary surface.
    pub queue_capacity: usize,
    /// Odd side length of the scoring patch.
    pub patch: usize,
    pub gauss_sigma: f64,
    pub harris_k: f64,
    pub threshold: f64,
}

/// Acceptance threshold calibrated on the built-in shapes-like scene
/// (raw reduction rate inside the 4-8 % band).
pub const DEFAULT_HARRIS_THRESHOLD: f64 = 10.0;

impl Default for EvHarrisConfig {
    fn default() -> Self {
        EvHarrisConfig {
            queue_capacity: 2000,
            patch: 9,
            gauss_sigma: 1.0,
            harris_k: 0.04,
            threshold: DEFAULT_HARRIS_THRESHOLD,
        }
    }
}

impl EvHarrisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch % 2 == 0 || self.patch < 5 {
            return Err(Error::Config(format!(
                "evharris.patch must be odd and >= 5, got {}",
                self.patch
            )));
        }
        if self.queue_capacity < self.patch * self.patch {
            return Err(Error::Config(format!(
                "evharris.queue_capacity must be >= patch^2 ({}), got {}",
                self.patch * self.patch,
                self.queue_capacity
            )));
        }
        if !(self.harris_k > 0.0 && self.harris_k < 0.25) {
            return Err(Error::Config(format!(
                "evharris.harris_k must lie in (0, 0.25), got {}",
                self.harris_k
            )));
        }
        if !(self.gauss_sigma > 0.0) {
            return Err(Error::Config("evharris.gauss_sigma must be > 0".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::Config("evharris.threshold must be >= 0".into()));
        }
        Ok(())
    }

    /// Pixels needed on each side of the event: half patch plus the Sobel reach.
    pub fn margin(&self) -> u32 {
        (self.patch / 2 + 1) as u32
    }
}

/// Normalized Gaussian weights over a `side x side` patch.
pub fn gaussian_weights(side: usize, sigma: f64) -> Vec<f64> {
    let r = (side / 2) as f64;
    let mut w = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let (dx, dy) = (i as f64 - r, j as f64 - r);
            w.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Harris response of a binary image.
///
/// `bin` is `(side + 2) x (side + 2)`, row-major, so every patch cell has its
/// full 3x3 Sobel neighbourhood. `weights` is `side x side`.
pub fn harris_response(bin: &[u8], side: usize, weights: &[f64], k: f64) -> f64 {
    let stride = side + 2;
    debug_assert_eq!(bin.len(), stride * stride);
    let b = |x: usize, y: usize| f64::from(bin[y * stride + x]);
    let (mut a, mut bb, mut c) = (0.0, 0.0, 0.0);
    for j in 0..side {
        for i in 0..side {
            let (x, y) = (i + 1, j + 1);
            let gx = (b(x + 1, y - 1) + 2.0 * b(x + 1, y) + b(x + 1, y + 1))
                - (b(x - 1, y - 1) + 2.0 * b(x - 1, y) + b(x - 1, y + 1));
            let gy = (b(x - 1, y + 1) + 2.0 * b(x, y + 1) + b(x + 1, y + 1))
                - (b(x - 1, y - 1) + 2.0 * b(x, y - 1) + b(x + 1, y - 1));
            let w = weights[j * side + i];
            a += w * gx * gx;
            bb += w * gy * gy;
            c += w * gx * gy;
        }
    }
    let det = a * bb - c * c;
    let trace = a + bb;
    det - k * trace * trace
}

/// Stateful evHarris: a FIFO of recent events per polarity and the occupancy
/// grid it induces.
#[derive(Clone, Debug)]
pub struct EvHarris {
    cfg: EvHarrisConfig,
    weights: Vec<f64>,
    queues: [VecDeque<(u16, u16)>; 2],
    occupancy: [Grid<u16>; 2],
    scratch: Vec<u8>,
}

impl EvHarris {
    pub fn new(cfg: EvHarrisConfig, width: u32, height: u32) -> Result<Self> {
        cfg.validate()?;
        let (w, h) = (width as usize, height as usize);
        let side = cfg.patch + 2;
        Ok(EvHarris {
            weights: gaussian_weights(cfg.patch, cfg.gauss_sigma),
            queues: [
                VecDeque::with_capacity(cfg.queue_capacity + 1),
                VecDeque::with_capacity(cfg.queue_capacity + 1),
            ],
            occupancy: [Grid::new(w, h, 0), Grid::new(w, h, 0)],
            scratch: vec![0; side * side],
            cfg,
        })
    }

    pub fn config(&self) -> &EvHarrisConfig {
        &self.cfg
    }

    /// Pushes `e` into its polarity queue (evicting the oldest entry when full).
    pub fn push(&mut self, e: &Event) {
        let pi = e.p.index();
        let occ = &mut self.occupancy[pi];
        let (x, y) = (e.x as usize, e.y as usize);
        occ.set(x, y, occ.get(x, y).saturating_add(1));
        self.queues[pi].push_back((e.x, e.y));
        if self.queues[pi].len() > self.cfg.queue_capacity {
            if let Some((ox, oy)) = self.queues[pi].pop_front() {
                let (ox, oy) = (ox as usize, oy as usize);
                occ.set(ox, oy, occ.get(ox, oy) - 1);
            }
        }
    }

    /// Response at `(x, y)` on the current binary surface of `p`, or `None`
    /// when the patch does not fit.
    pub fn response_at(&mut self, p: Polarity, x: u16, y: u16) -> Option<f64> {
        let occ = &self.occupancy[p.index()];
        let m = self.cfg.margin() as usize;
        let (x, y) = (x as usize, y as usize);
        if x < m || y < m || x + m >= occ.width() || y + m >= occ.height() {
            return None;
        }
        let side = self.cfg.patch + 2;
        for j in 0..side {
            for i in 0..side {
                self.scratch[j * side + i] = u8::from(occ.get(x + i - m, y + j - m) > 0);
            }
        }
        Some(harris_response(
            &self.scratch,
            self.cfg.patch,
            &self.weights,
            self.cfg.harris_k,
        ))
    }

    /// Pushes the event, then scores it. `None` for border events.
    pub fn detect(&mut self, e: &Event) -> Option<DetectionResult> {
        self.push(e);
        let score = self.response_at(e.p, e.x, e.y)?;
        Some(DetectionResult {
            is_corner: score > self.cfg.threshold,
            score,
        })
    }
}
