//! Concentric sampling circles and the contiguous-segment split used by the
//! FAST-family detectors.

use crate::event::Timestamp;

pub const INNER_LEN: usize = 16;
pub const OUTER_LEN: usize = 20;

/// Radius-3 ring, circularly ordered, as `(dx, dy)`.
pub const INNER_CIRCLE: [(i32, i32); INNER_LEN] = [
    (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3),
    (0, -3), (-1, -3), (-2, -2), (-3, -1),
    (-3, 0), (-3, 1), (-2, 2), (-1, 3),
];

/// Radius-4 ring, circularly ordered, as `(dx, dy)`.
pub const OUTER_CIRCLE: [(i32, i32); OUTER_LEN] = [
    (0, 4), (1, 4), (2, 3), (3, 2),
    (4, 1), (4, 0), (4, -1), (3, -2),
    (2, -3), (1, -4), (0, -4), (-1, -4),
    (-2, -3), (-3, -2), (-4, -1), (-4, 0),
    (-4, 1), (-3, 2), (-2, 3), (-1, 4),
];

/// Pixels a circle-based detector needs on every side of the event.
pub const CIRCLE_MARGIN: u32 = 4;

/// Both rings of one detector footprint.
#[derive(Clone, Copy, Debug)]
pub struct CircleTemplate {
    pub inner: &'static [(i32, i32); INNER_LEN],
    pub outer: &'static [(i32, i32); OUTER_LEN],
}

pub const TEMPLATE: CircleTemplate = CircleTemplate {
    inner: &INNER_CIRCLE,
    outer: &OUTER_CIRCLE,
};

/// Split of one circle into a newer segment and its complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub high: usize,
    pub low: usize,
}

/// Segment lengths on both rings around one event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentationResult {
    pub inner_high: usize,
    pub inner_low: usize,
    pub outer_high: usize,
    pub outer_low: usize,
}

impl SegmentationResult {
    pub fn new(inner: Split, outer: Split) -> Self {
        SegmentationResult {
            inner_high: inner.high,
            inner_low: inner.low,
            outer_high: outer.high,
            outer_low: outer.low,
        }
    }
}

/// Splits a circularly ordered ring of timestamps into one contiguous segment
/// whose oldest value is still newer than everything outside it.
///
/// Several such segments can exist (every superlevel set that happens to be
/// contiguous). The one with the widest timestamp gap to the complement wins;
/// equal gaps go to the shorter, newer segment. With no valid segment (all
/// values equal) the result is the degenerate `(len, 0)`.
pub fn segment_circle(values: &[Timestamp]) -> Split {
    let n = values.len();
    debug_assert!((3..=OUTER_LEN).contains(&n));
    let mut order: [(Timestamp, u8); OUTER_LEN] = [(0, 0); OUTER_LEN];
    let order = &mut order[..n];
    for (i, (o, &v)) in order.iter_mut().zip(values).enumerate() {
        *o = (v, i as u8);
    }
    insertion_sort_desc(order);

    // add cells newest first, tracking how many cyclic runs the set forms
    let mut member = [false; OUTER_LEN];
    let mut runs: i32 = 0;
    let mut best: Option<(u64, usize)> = None;
    let mut i = 0;
    while i < n {
        let level = order[i].0;
        let mut j = i;
        while j < n && order[j].0 == level {
            let c = order[j].1 as usize;
            let left = member[if c == 0 { n - 1 } else { c - 1 }];
            let right = member[if c + 1 == n { 0 } else { c + 1 }];
            runs += 1 - i32::from(left) - i32::from(right);
            member[c] = true;
            j += 1;
        }
        if j == n {
            break;
        }
        if runs == 1 {
            let gap = level.abs_diff(order[j].0);
            if best.is_none_or(|(g, _)| gap > g) {
                best = Some((gap, j));
            }
        }
        i = j;
    }
    match best {
        Some((_, high)) => Split { high, low: n - high },
        None => Split { high: n, low: 0 },
    }
}

/// Newest first; rings are short enough that insertion sort wins.
#[inline]
fn insertion_sort_desc(a: &mut [(Timestamp, u8)]) {
    for i in 1..a.len() {
        let x = a[i];
        let mut j = i;
        while j > 0 && a[j - 1].0 < x.0 {
            a[j] = a[j - 1];
            j -= 1;
        }
        a[j] = x;
    }
}

/// Corner score: the longer segment of each ring, summed.
pub fn fast_corner_score(seg: &SegmentationResult) -> f64 {
    (seg.inner_high.max(seg.inner_low) + seg.outer_high.max(seg.outer_low)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive reference: every (start, length) arc, keep valid ones,
    /// widest gap first, shortest on ties.
    fn exhaustive_split(values: &[Timestamp]) -> Split {
        let n = values.len();
        let mut best: Option<(i128, usize)> = None;
        for len in 1..n {
            for start in 0..n {
                let inside: Vec<i128> = (0..len).map(|k| values[(start + k) % n] as i128).collect();
                let outside: Vec<i128> =
                    (len..n).map(|k| values[(start + k) % n] as i128).collect();
                let lo = *inside.iter().min().unwrap();
                let hi = *outside.iter().max().unwrap();
                if lo > hi {
                    let gap = lo - hi;
                    let better = match best {
                        None => true,
                        Some((g, l)) => gap > g || (gap == g && len < l),
                    };
                    if better {
                        best = Some((gap, len));
                    }
                }
            }
        }
        match best {
            Some((_, len)) => Split { high: len, low: n - len },
            None => Split { high: n, low: 0 },
        }
    }

    #[test]
    fn circles_have_expected_sizes_and_radii() {
        assert_eq!(INNER_CIRCLE.len(), 16);
        assert_eq!(OUTER_CIRCLE.len(), 20);
        for (ring, r) in [(&INNER_CIRCLE[..], 3.0), (&OUTER_CIRCLE[..], 4.0)] {
            for &(dx, dy) in ring {
                let d = f64::from(dx).hypot(f64::from(dy));
                assert!((d - r).abs() < 0.5, "({dx},{dy}) at {d}");
            }
        }
    }

    #[test]
    fn circles_are_ordered_and_rotation_symmetric() {
        for ring in [&INNER_CIRCLE[..], &OUTER_CIRCLE[..]] {
            let n = ring.len();
            for i in 0..n {
                let (ax, ay) = ring[i];
                let (bx, by) = ring[(i + 1) % n];
                assert!((ax - bx).abs() <= 1 && (ay - by).abs() <= 1, "gap at {i}");
                assert!(ring.contains(&(-ay, ax)), "({ax},{ay}) rotated missing");
            }
            // quarter turn is a cyclic shift by n/4
            for i in 0..n {
                let (x, y) = ring[i];
                assert_eq!(ring[(i + n / 4) % n], (y, -x));
            }
        }
    }

    #[test]
    fn all_equal_is_degenerate() {
        assert_eq!(segment_circle(&[7; 16]), Split { high: 16, low: 0 });
        assert_eq!(segment_circle(&[crate::NEVER; 20]), Split { high: 20, low: 0 });
    }

    #[test]
    fn constructed_arc_of_six() {
        let mut v = [0; 16];
        v[5..11].fill(1);
        assert_eq!(segment_circle(&v), Split { high: 6, low: 10 });
        // wrapping arc
        let mut w = [0; 16];
        for k in [14, 15, 0, 1] {
            w[k] = 9;
        }
        assert_eq!(segment_circle(&w), Split { high: 4, low: 12 });
    }

    #[test]
    fn widest_gap_wins_over_shorter_split() {
        // 100 at one spot, 90 next to it, everything else 0: both {100} and
        // {100, 90} are valid; the second has the larger gap.
        let mut v = [0; 16];
        v[3] = 100;
        v[4] = 90;
        assert_eq!(segment_circle(&v), Split { high: 2, low: 14 });
    }

    #[test]
    fn score_examples() {
        let s = |a, b, c, d| {
            fast_corner_score(&SegmentationResult {
                inner_high: a,
                inner_low: b,
                outer_high: c,
                outer_low: d,
            })
        };
        assert_eq!(s(4, 12, 5, 15), 27.0);
        assert_eq!(s(12, 4, 15, 5), 27.0);
        assert_eq!(s(16, 0, 20, 0), 36.0);
    }

    fn ring(n: usize) -> impl Strategy<Value = Vec<Timestamp>> {
        prop::collection::vec(
            prop_oneof![3 => 0i64..6, 1 => Just(crate::NEVER), 1 => 0i64..1_000_000],
            n,
        )
    }

    proptest! {
        #[test]
        fn matches_exhaustive_inner(v in ring(16)) {
            prop_assert_eq!(segment_circle(&v), exhaustive_split(&v));
        }

        #[test]
        fn matches_exhaustive_outer(v in ring(20)) {
            prop_assert_eq!(segment_circle(&v), exhaustive_split(&v));
        }

        #[test]
        fn score_bounds_and_swap_symmetry(a in 1usize..16, b in 1usize..20) {
            let seg = SegmentationResult { inner_high: a, inner_low: 16 - a, outer_high: b, outer_low: 20 - b };
            let swapped = SegmentationResult { inner_high: 16 - a, inner_low: a, outer_high: 20 - b, outer_low: b };
            let s = fast_corner_score(&seg);
            prop_assert!((18.0..=36.0).contains(&s));
            prop_assert_eq!(s, fast_corner_score(&swapped));
        }
    }
}
