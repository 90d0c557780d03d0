//! evFAST and ArcFAST: ring segment tests on the raw SAE.

use std::ops::RangeInclusive;

use super::circle::{
    fast_corner_score, segment_circle, SegmentationResult, CIRCLE_MARGIN, INNER_CIRCLE,
    INNER_LEN, OUTER_CIRCLE, OUTER_LEN,
};
use super::DetectionResult;
use crate::event::{Event, SurfaceState, Timestamp};

pub const EVFAST_INNER: [RangeInclusive<usize>; 1] = [3..=6];
pub const EVFAST_OUTER: [RangeInclusive<usize>; 1] = [4..=8];
pub const ARCFAST_INNER: [RangeInclusive<usize>; 2] = [3..=6, 10..=13];
pub const ARCFAST_OUTER: [RangeInclusive<usize>; 2] = [4..=8, 13..=16];

#[inline]
fn circle_margin_ok(state: &SurfaceState, e: &Event) -> bool {
    let (x, y) = (u32::from(e.x), u32::from(e.y));
    x >= CIRCLE_MARGIN
        && y >= CIRCLE_MARGIN
        && x + CIRCLE_MARGIN < state.width()
        && y + CIRCLE_MARGIN < state.height()
}

/// Segments both rings around `e` on the SAE of its polarity.
///
/// `None` when the event is too close to the border for the outer ring.
pub fn segment_event(state: &SurfaceState, e: &Event) -> Option<SegmentationResult> {
    if !circle_margin_ok(state, e) {
        return None;
    }
    let grid = state.sae_grid(e.p);
    let (cx, cy) = (i32::from(e.x), i32::from(e.y));
    let sample = |&(dx, dy): &(i32, i32)| grid.get((cx + dx) as usize, (cy + dy) as usize);

    let mut inner: [Timestamp; INNER_LEN] = [0; INNER_LEN];
    for (v, off) in inner.iter_mut().zip(INNER_CIRCLE.iter()) {
        *v = sample(off);
    }
    let mut outer: [Timestamp; OUTER_LEN] = [0; OUTER_LEN];
    for (v, off) in outer.iter_mut().zip(OUTER_CIRCLE.iter()) {
        *v = sample(off);
    }
    Some(SegmentationResult::new(
        segment_circle(&inner),
        segment_circle(&outer),
    ))
}

fn in_bands(len: usize, bands: &[RangeInclusive<usize>]) -> bool {
    bands.iter().any(|b| b.contains(&len))
}

fn detect_with_bands(
    state: &SurfaceState,
    e: &Event,
    inner: &[RangeInclusive<usize>],
    outer: &[RangeInclusive<usize>],
) -> Option<DetectionResult> {
    let seg = segment_event(state, e)?;
    Some(DetectionResult {
        is_corner: in_bands(seg.inner_high, inner) && in_bands(seg.outer_high, outer),
        score: fast_corner_score(&seg),
    })
}

pub fn ev_fast_detect(state: &SurfaceState, e: &Event) -> Option<DetectionResult> {
    detect_with_bands(state, e, &EVFAST_INNER, &EVFAST_OUTER)
}

/// evFAST bands widened to accept corners sharper than 180 degrees from the other side.
pub fn arc_fast_detect(state: &SurfaceState, e: &Event) -> Option<DetectionResult> {
    detect_with_bands(state, e, &ARCFAST_INNER, &ARCFAST_OUTER)
}

#[cfg(test)]
pub(crate) mod patches {
    use crate::event::{Event, Polarity, SurfaceState, Timestamp};

    /// Paints an SAE patch around `(cx, cy)` from `f(dx, dy)` (`None` leaves the cell unfired)
    /// and returns the state plus the center event stamped at `t_now`.
    pub fn paint(
        f: impl Fn(i32, i32) -> Option<Timestamp>,
        t_now: Timestamp,
    ) -> (SurfaceState, Event) {
        let (cx, cy) = (20i32, 20i32);
        let mut s = SurfaceState::new(41, 41);
        let mut cells = Vec::new();
        for dy in -8..=8 {
            for dx in -8..=8 {
                if (dx, dy) == (0, 0) {
                    continue;
                }
                if let Some(t) = f(dx, dy) {
                    cells.push((t, (cx + dx) as u16, (cy + dy) as u16));
                }
            }
        }
        cells.sort();
        for (t, x, y) in cells {
            s.update_sae(Event::new(t, x, y, Polarity::Positive)).unwrap();
        }
        let e = Event::new(t_now, cx as u16, cy as u16, Polarity::Positive);
        s.update_sae(e).unwrap();
        (s, e)
    }

    /// Time surface of a convex wedge sweeping along its bisector: cells inside
    /// fired `depth` microseconds ago, cells outside never fired.
    /// `quadrants` lists which axis quadrants belong to the shape.
    pub fn corner(quadrants: &[(i32, i32)]) -> impl Fn(i32, i32) -> Option<Timestamp> + '_ {
        move |dx, dy| {
            let inside = quadrants.iter().any(|&(sx, sy)| dx * sx >= 0 && dy * sy >= 0);
            if inside {
                // older the deeper into the shape along the motion direction
                Some(1000 - 10 * (dx.abs() + dy.abs()) as Timestamp)
            } else {
                None
            }
        }
    }

    /// A straight edge: the half-plane `dy <= 0` fired, newest at the front.
    pub fn edge(dx: i32, dy: i32) -> Option<Timestamp> {
        let _ = dx;
        (dy <= 0).then(|| 1000 + 10 * dy as Timestamp)
    }

    pub fn uniform(_: i32, _: i32) -> Option<Timestamp> {
        Some(500)
    }

    pub fn rotate(
        f: impl Fn(i32, i32) -> Option<Timestamp>,
    ) -> impl Fn(i32, i32) -> Option<Timestamp> {
        move |dx, dy| f(dy, -dx)
    }
}
