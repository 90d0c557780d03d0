//! Event model and the per-polarity surfaces shared by detectors and the filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer microseconds since stream start.
pub type Timestamp = i64;

/// SAE value for a pixel that has never fired. Compares older than every real timestamp.
pub const NEVER: Timestamp = i64::MIN;

pub const DEFAULT_WIDTH: u32 = 240;
pub const DEFAULT_HEIGHT: u32 = 180;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Negative, Polarity::Positive];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    /// `events.txt` encoding: 0 is negative, 1 is positive.
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self.index() as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: Timestamp,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: Timestamp, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }

    pub fn t_seconds(&self) -> f64 {
        self.t as f64 * 1e-6
    }
}

/// What to do with an event whose timestamp precedes the previous one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderPolicy {
    #[default]
    Reject,
    /// Rewrite the timestamp to the previous event's.
    Clamp,
}

/// A dense `width x height` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Grid {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }
}

/// Per-polarity Surface of Active Events (latest timestamp) and its score
/// companion (latest corner score).
///
/// Single writer: all mutation happens on the ingestion sequence of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceState {
    width: u32,
    height: u32,
    sae: [Grid<Timestamp>; 2],
    ssae: [Grid<f64>; 2],
    order_policy: OrderPolicy,
    last_t: Option<Timestamp>,
    position: u64,
}

impl SurfaceState {
    pub fn new(width: u32, height: u32) -> Self {
        Self::with_policy(width, height, OrderPolicy::Reject)
    }

    pub fn with_policy(width: u32, height: u32, order_policy: OrderPolicy) -> Self {
        let (w, h) = (width as usize, height as usize);
        SurfaceState {
            width,
            height,
            sae: [Grid::new(w, h, NEVER), Grid::new(w, h, NEVER)],
            ssae: [Grid::new(w, h, 0.0), Grid::new(w, h, 0.0)],
            order_policy,
            last_t: None,
            position: 0,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of events ingested so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn last_t(&self) -> Option<Timestamp> {
        self.last_t
    }

    #[inline]
    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }

    #[inline]
    pub fn sae(&self, p: Polarity, x: usize, y: usize) -> Timestamp {
        self.sae[p.index()].get(x, y)
    }

    #[inline]
    pub fn ssae(&self, p: Polarity, x: usize, y: usize) -> f64 {
        self.ssae[p.index()].get(x, y)
    }

    pub fn sae_grid(&self, p: Polarity) -> &Grid<Timestamp> {
        &self.sae[p.index()]
    }

    pub fn ssae_grid(&self, p: Polarity) -> &Grid<f64> {
        &self.ssae[p.index()]
    }

    /// Checks bounds and ordering, then stamps `e.t` into the SAE of its polarity.
    ///
    /// Returns the event as ingested (its timestamp may be clamped).
    pub fn update_sae(&mut self, e: Event) -> Result<Event> {
        let e = self.admit(e)?;
        self.sae[e.p.index()].set(e.x as usize, e.y as usize, e.t);
        Ok(e)
    }

    /// Validation half of [`update_sae`](Self::update_sae): advances the stream
    /// position without touching any surface.
    pub fn admit(&mut self, mut e: Event) -> Result<Event> {
        let position = self.position;
        if u32::from(e.x) >= self.width || u32::from(e.y) >= self.height {
            return Err(Error::OutOfBounds {
                position,
                x: e.x.into(),
                y: e.y.into(),
                width: self.width,
                height: self.height,
            });
        }
        if let Some(previous) = self.last_t {
            if e.t < previous {
                match self.order_policy {
                    OrderPolicy::Reject => {
                        return Err(Error::OutOfOrder {
                            position,
                            t: e.t,
                            previous,
                        })
                    }
                    OrderPolicy::Clamp => e.t = previous,
                }
            }
        }
        self.last_t = Some(e.t);
        self.position += 1;
        Ok(e)
    }

    /// Writes a corner score for `e` without touching the SAE.
    #[inline]
    pub(crate) fn set_ssae(&mut self, e: &Event, score: f64) {
        self.ssae[e.p.index()].set(e.x as usize, e.y as usize, score);
    }

    /// Writes both surfaces for `e` at once.
    #[inline]
    pub(crate) fn set_both(&mut self, e: &Event, score: f64) {
        self.sae[e.p.index()].set(e.x as usize, e.y as usize, e.t);
        self.ssae[e.p.index()].set(e.x as usize, e.y as usize, score);
    }
}
