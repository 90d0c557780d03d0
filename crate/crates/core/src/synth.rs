//! Moving-polygon scenes with exact corner tracks.
//!
//! A polygon boundary is an intensity ramp 1 px wide. A pixel centre emits
//! one event each time the ramp carries it across a contrast level, so a
//! boundary of contrast `c` passing over it yields `floor(c / threshold)`
//! events: positive when the (brighter) shape enters, negative when it
//! leaves. Crossing times are resolved to 1 µs by bisection. Vertex trajectories are
//! exported as ground-truth tracks sampled every millisecond.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, Polarity, Timestamp};
use crate::ground_truth::{Interpolation, Track, TrackSample, TrajectorySet};

/// Largest boundary displacement between two sampled instants, px.
const MAX_STEP_PX: f64 = 0.25;
const TRACK_PERIOD_US: Timestamp = 1000;
/// Width of the intensity ramp across a polygon boundary, px.
const EDGE_WIDTH_PX: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    /// Polygon at t = 0, px.
    pub vertices: Vec<[f64; 2]>,
    /// px/s.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// rad/s about the initial vertex centroid (which moves with `velocity`).
    #[serde(default)]
    pub rotation: f64,
    /// Log-intensity step across the boundary; sign sets the polarity convention.
    #[serde(default = "one")]
    pub contrast: f64,
    /// Sinusoidal displacement amplitude added to the linear motion, px.
    #[serde(default)]
    pub oscillation: [f64; 2],
    /// Hz; shared by both axes.
    #[serde(default)]
    pub frequency: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "one")]
    pub contrast_threshold: f64,
    /// Uniform background events per pixel per second.
    #[serde(default)]
    pub noise_rate: f64,
    pub shapes: Vec<ShapeSpec>,
}

impl ShapeSpec {
    pub fn polygon(vertices: &[[f64; 2]], velocity: [f64; 2], rotation: f64) -> Self {
        ShapeSpec {
            vertices: vertices.to_vec(),
            velocity,
            rotation,
            contrast: 1.0,
            oscillation: [0.0, 0.0],
            frequency: 0.0,
        }
    }

    /// Regular `n`-gon of circumradius `r` centred at `c`, first vertex at angle `phase`.
    pub fn regular(n: usize, c: [f64; 2], r: f64, phase: f64, velocity: [f64; 2], rotation: f64) -> Self {
        let vertices: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
                [c[0] + r * a.cos(), c[1] + r * a.sin()]
            })
            .collect();
        Self::polygon(&vertices, velocity, rotation)
    }

    fn centroid(&self) -> [f64; 2] {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), v| (sx + v[0], sy + v[1]));
        [sx / n, sy / n]
    }

    fn max_speed(&self) -> f64 {
        let c = self.centroid();
        let r = self
            .vertices
            .iter()
            .map(|v| (v[0] - c[0]).hypot(v[1] - c[1]))
            .fold(0.0, f64::max);
        let osc = std::f64::consts::TAU * self.frequency.abs() * self.oscillation[0].hypot(self.oscillation[1]);
        self.velocity[0].hypot(self.velocity[1]) + osc + self.rotation.abs() * r
    }

    fn events_per_crossing(&self, threshold: f64) -> usize {
        ((self.contrast.abs() / threshold).floor() as usize).max(1)
    }
}

/// A shape's vertices at one instant.
struct Posed {
    c0: [f64; 2],
    rel: Vec<[f64; 2]>,
    velocity: [f64; 2],
    rotation: f64,
    oscillation: [f64; 2],
    frequency: f64,
}

impl Posed {
    fn new(s: &ShapeSpec) -> Self {
        let c0 = s.centroid();
        Posed {
            c0,
            rel: s.vertices.iter().map(|v| [v[0] - c0[0], v[1] - c0[1]]).collect(),
            velocity: s.velocity,
            rotation: s.rotation,
            oscillation: s.oscillation,
            frequency: s.frequency,
        }
    }

    fn at(&self, t_us: Timestamp, out: &mut Vec<[f64; 2]>) {
        let t = t_us as f64 * 1e-6;
        let (sin, cos) = (self.rotation * t).sin_cos();
        let wave = (std::f64::consts::TAU * self.frequency * t).sin();
        let cx = self.c0[0] + self.velocity[0] * t + self.oscillation[0] * wave;
        let cy = self.c0[1] + self.velocity[1] * t + self.oscillation[1] * wave;
        out.clear();
        out.extend(
            self.rel
                .iter()
                .map(|&[x, y]| [cx + cos * x - sin * y, cy + sin * x + cos * y]),
        );
    }
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Distance from a point to the polygon's boundary.
pub fn distance_to_boundary(poly: &[[f64; 2]], x: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let [ax, ay] = poly[j];
        let [bx, by] = poly[i];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let u = if len2 > 0.0 {
            (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min((x - ax - u * dx).hypot(y - ay - u * dy));
        j = i;
    }
    best
}

impl SceneSpec {
    pub fn from_toml(s: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(s).map_err(|e| Error::Config(format!("scene spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn duration_us(&self) -> Timestamp {
        (self.duration * 1e6).round() as Timestamp
    }

    /// Structural checks; bounds over time are checked by [`generate`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scene spec: {m}")));
        if self.width == 0 || self.height == 0 || self.width > u32::from(u16::MAX) || self.height > u32::from(u16::MAX) {
            return bad(format!("bad geometry {}x{}", self.width, self.height));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad("duration must be finite and >= 0".into());
        }
        if !(self.contrast_threshold.is_finite() && self.contrast_threshold > 0.0) {
            return bad("contrast_threshold must be > 0".into());
        }
        if !(self.noise_rate.is_finite() && self.noise_rate >= 0.0) {
            return bad("noise_rate must be >= 0".into());
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if s.vertices.len() < 3 {
                return bad(format!("shape {i} has fewer than 3 vertices"));
            }
            let finite = s
                .vertices
                .iter()
                .flatten()
                .chain(&s.velocity)
                .chain(&s.oscillation)
                .chain([&s.rotation, &s.frequency])
                .all(|v| v.is_finite());
            if !finite || !s.contrast.is_finite() || s.contrast == 0.0 {
                return bad(format!("shape {i} has a non-finite or zero parameter"));
            }
        }
        Ok(())
    }

    /// Shapes-scene surrogate: a few large polygons drifting and rotating
    /// over a plain background under a common hand-held shake, light noise.
    pub fn shapes_like() -> Self {
        let mut shapes = vec![
            ShapeSpec::regular(3, [50.0, 50.0], 22.0, 0.3, [18.0, 9.0], 0.6),
            ShapeSpec::polygon(
                &[[110.0, 30.0], [150.0, 30.0], [150.0, 70.0], [110.0, 70.0]],
                [-12.0, 14.0],
                -0.4,
            ),
            ShapeSpec::regular(5, [195.0, 55.0], 20.0, 0.0, [-8.0, 20.0], 0.5),
            ShapeSpec::regular(6, [60.0, 130.0], 18.0, 0.2, [25.0, -6.0], -0.7),
            ShapeSpec::polygon(
                &[[140.0, 110.0], [185.0, 115.0], [175.0, 150.0], [150.0, 160.0], [160.0, 135.0]],
                [-15.0, -8.0],
                0.3,
            ),
        ];
        for s in &mut shapes {
            s.oscillation = [6.0, 4.0];
            s.frequency = 1.5;
        }
        SceneSpec {
            width: 240,
            height: 180,
            duration: 2.0,
            contrast_threshold: 1.0,
            noise_rate: 0.1,
            shapes,
        }
    }

    /// Boxes-scene surrogate: a dense staggered grid of small boxes of
    /// alternating contrast in common motion, heavier noise.
    pub fn boxes_like() -> Self {
        const SIZE: f64 = 10.0;
        const PITCH: f64 = 14.0;
        let mut shapes = Vec::new();
        let mut y = 20.0;
        for row in 0.. {
            if y + SIZE >= 160.0 {
                break;
            }
            let mut x = 20.0 + (row % 2) as f64 * PITCH / 2.0;
            for col in 0.. {
                if x + SIZE >= 210.0 {
                    break;
                }
                let w = SIZE * (0.7 + 0.15 * ((row * 3 + col) % 3) as f64);
                let h = SIZE * (0.7 + 0.15 * ((row + col * 2) % 3) as f64);
                let mut s = ShapeSpec::polygon(&[[x, y], [x + w, y], [x + w, y + h], [x, y + h]], [10.0, 5.0], 0.0);
                s.oscillation = [6.0, 4.0];
                s.frequency = 1.5;
                if (row + col) % 2 == 1 {
                    s.contrast = -1.0;
                }
                shapes.push(s);
                x += PITCH;
            }
            y += PITCH;
        }
        SceneSpec {
            width: 240,
            height: 180,
            duration: 1.0,
            contrast_threshold: 1.0,
            noise_rate: 0.5,
            shapes,
        }
    }

    /// One translating square and no noise.
    pub fn single_corner() -> Self {
        SceneSpec {
            width: 240,
            height: 180,
            duration: 1.0,
            contrast_threshold: 1.0,
            noise_rate: 0.0,
            shapes: vec![ShapeSpec::polygon(
                &[[60.0, 60.0], [100.0, 60.0], [100.0, 100.0], [60.0, 100.0]],
                [40.0, 25.0],
                0.0,
            )],
        }
    }
}

fn check_bounds(spec: &SceneSpec, idx: usize, poly: &[[f64; 2]], t: Timestamp) -> Result<()> {
    let (w, h) = (f64::from(spec.width - 1), f64::from(spec.height - 1));
    if poly
        .iter()
        .any(|&[x, y]| !(x >= 0.0 && x <= w && y >= 0.0 && y <= h))
    {
        return Err(Error::SceneBounds {
            shape: idx,
            t: t as f64 * 1e-6,
        });
    }
    Ok(())
}

/// Integer pixel-centre box covering `polys`, clipped to the sensor.
fn pixel_box(spec: &SceneSpec, polys: [&[[f64; 2]]; 2]) -> (u32, u32, u32, u32) {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &[x, y] in polys.into_iter().flatten() {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let clip = |v: f64, hi: u32| (v.max(0.0) as u32).min(hi - 1);
    let m = EDGE_WIDTH_PX;
    (
        clip((x0 - m).floor(), spec.width),
        clip((y0 - m).floor(), spec.height),
        clip((x1 + m).ceil(), spec.width),
        clip((y1 + m).ceil(), spec.height),
    )
}

/// Boundary offset, px (positive inward), at which level `k` of `n` is crossed.
fn level_offset(k: usize, n: usize) -> f64 {
    ((k as f64 + 0.5) / n as f64 - 0.5) * EDGE_WIDTH_PX
}

fn signed_distance(poly: &[[f64; 2]], x: f64, y: f64) -> f64 {
    let d = distance_to_boundary(poly, x, y);
    if point_in_polygon(poly, x, y) {
        d
    } else {
        -d
    }
}

/// Past level offset `o`. The tolerance keeps pixel centres lying exactly on
/// an edge that slides along itself from flickering on rounding noise.
fn past(sd: f64, o: f64) -> bool {
    sd > o + 1e-9
}

fn level(sd: f64, n: usize) -> u8 {
    (0..n).filter(|&k| past(sd, level_offset(k, n))).count() as u8
}

fn shape_events(spec: &SceneSpec, idx: usize) -> Result<Vec<Event>> {
    let shape = &spec.shapes[idx];
    let posed = Posed::new(shape);
    let end = spec.duration_us();
    let mut a = Vec::new();
    posed.at(0, &mut a);
    check_bounds(spec, idx, &a, 0)?;

    let speed = shape.max_speed();
    if speed == 0.0 || end == 0 {
        return Ok(Vec::new());
    }
    let dt = ((MAX_STEP_PX / speed * 1e6).floor() as Timestamp).max(1);
    let n = shape.events_per_crossing(spec.contrast_threshold);
    let bright = shape.contrast > 0.0;

    // per-pixel count of intensity levels currently crossed
    let w = spec.width as usize;
    let mut levels = vec![0u8; w * spec.height as usize];
    let (x0, y0, x1, y1) = pixel_box(spec, [&a, &a]);
    for y in y0..=y1 {
        for x in x0..=x1 {
            levels[y as usize * w + x as usize] = level(signed_distance(&a, f64::from(x), f64::from(y)), n);
        }
    }

    let mut out = Vec::new();
    let mut b = Vec::new();
    let mut probe = Vec::new();
    let mut t0 = 0;
    while t0 < end {
        let t1 = (t0 + dt).min(end);
        posed.at(t1, &mut b);
        check_bounds(spec, idx, &b, t1)?;
        let (x0, y0, x1, y1) = pixel_box(spec, [&a, &b]);
        let first = out.len();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cell = &mut levels[y as usize * w + x as usize];
                let (px, py) = (f64::from(x), f64::from(y));
                let now = level(signed_distance(&b, px, py), n);
                if now == *cell {
                    continue;
                }
                let rising = now > *cell;
                let crossed = if rising { *cell..now } else { now..*cell };
                let p = if rising == bright { Polarity::Positive } else { Polarity::Negative };
                for k in crossed {
                    let o = level_offset(usize::from(k), n);
                    // first instant in (t0, t1] past this level
                    let (mut lo, mut hi) = (t0, t1);
                    while hi - lo > 1 {
                        let mid = lo + (hi - lo) / 2;
                        posed.at(mid, &mut probe);
                        if past(signed_distance(&probe, px, py), o) == rising {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    out.push(Event::new(hi, x as u16, y as u16, p));
                }
                *cell = now;
            }
        }
        out[first..].sort_by_key(|e| e.t);
        std::mem::swap(&mut a, &mut b);
        t0 = t1;
    }
    Ok(out)
}

fn shape_tracks(spec: &SceneSpec, idx: usize, first_id: u64) -> Result<Vec<Track>> {
    let posed = Posed::new(&spec.shapes[idx]);
    let end = spec.duration_us();
    let mut times: Vec<Timestamp> = (0..).map(|k| k * TRACK_PERIOD_US).take_while(|&t| t < end).collect();
    times.push(end);
    let mut per_vertex: Vec<Vec<TrackSample>> = vec![Vec::with_capacity(times.len()); posed.rel.len()];
    let mut poly = Vec::new();
    for &t in &times {
        posed.at(t, &mut poly);
        for (v, &[x, y]) in per_vertex.iter_mut().zip(&poly) {
            v.push(TrackSample { t, x, y });
        }
    }
    if end == 0 {
        // a zero-length scene still gets a two-sample static track
        for v in &mut per_vertex {
            let s = v[0];
            v.push(TrackSample { t: 1, ..s });
        }
    }
    per_vertex
        .into_iter()
        .enumerate()
        .map(|(i, s)| Track::new(first_id + i as u64, s, Interpolation::Linear))
        .collect()
}

fn noise_events(spec: &SceneSpec, seed: u64) -> Vec<Event> {
    let rate = spec.noise_rate * f64::from(spec.width) * f64::from(spec.height);
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end = spec.duration_us();
    let mut t = 0.0;
    loop {
        t += -(1.0 - rng.gen::<f64>()).ln() / rate;
        let ts = (t * 1e6).round() as Timestamp;
        if ts > end {
            break;
        }
        let x = rng.gen_range(0..spec.width) as u16;
        let y = rng.gen_range(0..spec.height) as u16;
        let p = if rng.gen::<bool>() { Polarity::Positive } else { Polarity::Negative };
        out.push(Event::new(ts, x, y, p));
    }
    out
}

/// Renders a scene. Deterministic in `seed` (which only drives the noise).
///
/// Track ids are assigned in shape order, one per vertex.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<(Vec<Event>, TrajectorySet)> {
    spec.validate()?;
    let per_shape: Vec<Result<Vec<Event>>> = (0..spec.shapes.len())
        .into_par_iter()
        .map(|i| shape_events(spec, i))
        .collect();
    let mut events = Vec::new();
    for r in per_shape {
        events.extend(r?);
    }
    events.extend(noise_events(spec, seed));
    // stable: equal timestamps keep shape order, then noise
    events.sort_by_key(|e| e.t);

    let mut tracks = Vec::new();
    let mut next_id = 0;
    for i in 0..spec.shapes.len() {
        let t = shape_tracks(spec, i, next_id)?;
        next_id += t.len() as u64;
        tracks.extend(t);
    }
    Ok((events, TrajectorySet::new(tracks)))
}

/// Exactly `n` events from back-to-back renders of `spec`, each copy with
/// the next seed and shifted to start after the previous one ends.
pub fn stream_of_len(spec: &SceneSpec, seed: u64, n: usize) -> Result<Vec<Event>> {
    let mut out = Vec::with_capacity(n);
    let span = spec.duration_us() + 1;
    let mut copy = 0u64;
    while out.len() < n {
        let (ev, _) = generate(spec, seed.wrapping_add(copy))?;
        if ev.is_empty() {
            return Err(Error::Config("scene produces no events".into()));
        }
        let offset = span * copy as Timestamp;
        out.extend(ev.into_iter().take(n - out.len()).map(|e| Event { t: e.t + offset, ..e }));
        copy += 1;
    }
    Ok(out)
}

/// Polygon of shape `idx` at time `t`, for tests and diagnostics.
pub fn shape_at(spec: &SceneSpec, idx: usize, t: Timestamp) -> Vec<[f64; 2]> {
    let mut v = Vec::new();
    Posed::new(&spec.shapes[idx]).at(t, &mut v);
    v
}
