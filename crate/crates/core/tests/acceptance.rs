//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits non-zero when any fails.

use std::time::{Duration, Instant};

use evnms::anms::decay_coefficient;
use evnms::detectors::{fast_corner_score, segment_circle, SegmentationResult, Split};
use evnms::ground_truth::{
    label_event, EvalWindow, EventLabel, LabelThresholds, Interpolation, Track, TrackSample, TrajectorySet,
};
use evnms::io::write_events;
use evnms::metrics::{bench, evaluate, reduction_rate, MetricsReport};
use evnms::pipeline::{run_pipeline, PipelineConfig};
use evnms::synth::{generate, stream_of_len, SceneSpec};
use evnms::{AnmsConfig, AnmsFilter, DetectorKind, Event, Polarity, SaePolicy, SurfaceState, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.gen_bool(0.5) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

// ---------------------------------------------------------------------------
// 1. streaming suppression vs full-history recomputation

/// Rebuilds both surfaces of the event's polarity from the whole history,
/// then applies the window-maximum rule literally.
fn history_decision(history: &[(Event, Option<f64>)], e: &Event, cfg: &AnmsConfig, w: usize, h: usize) -> bool {
    let mut sae = vec![i64::MIN; w * h];
    let mut ssae = vec![0.0f64; w * h];
    for (o, s) in history {
        if o.p != e.p {
            continue;
        }
        let i = o.y as usize * w + o.x as usize;
        let stamps = match cfg.sae_policy {
            SaePolicy::AllEvents => true,
            SaePolicy::CornersOnly => s.is_some(),
        };
        if stamps {
            sae[i] = o.t;
        }
        if let Some(s) = s {
            ssae[i] = *s;
        }
    }
    let r = cfg.window_radius as i64;
    let cells: Vec<(usize, usize)> = (e.y as i64 - r..=e.y as i64 + r)
        .flat_map(|y| (e.x as i64 - r..=e.x as i64 + r).map(move |x| (x, y)))
        .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
        .map(|(x, y)| (x as usize, y as usize))
        .collect();

    let mut ages: Vec<Timestamp> = cells
        .iter()
        .filter(|&&(x, y)| (x, y) != (e.x as usize, e.y as usize))
        .map(|&(x, y)| sae[y * w + x])
        .filter(|&t| t != i64::MIN)
        .map(|t| e.t - t)
        .collect();
    ages.sort_unstable();
    ages.truncate(cfg.tau_neighbors);
    let tau_us = if ages.is_empty() {
        cfg.tau_fallback * 1e6
    } else {
        ages.iter().sum::<Timestamp>() as f64 / ages.len() as f64
    };
    let ktau = (cfg.k * tau_us.max(1.0)).max(1.0);

    let decayed = |x: usize, y: usize| {
        let t = sae[y * w + x];
        if t == i64::MIN {
            0.0
        } else {
            (-((e.t - t) as f64) / ktau).exp().max(f64::MIN_POSITIVE) * ssae[y * w + x]
        }
    };
    let center = decayed(e.x as usize, e.y as usize);
    cells.iter().all(|&(x, y)| decayed(x, y) <= center)
}

fn one_oracle_stream(seed: u64, policy: SaePolicy, n: usize) -> (usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (rng.gen_range(12..40u32), rng.gen_range(10..30u32));
    let cfg = AnmsConfig {
        window_radius: rng.gen_range(1..=5),
        k: [5.0, 20.0, 50.0][rng.gen_range(0..3)],
        sae_policy: policy,
        ..Default::default()
    };
    let mut state = SurfaceState::new(w, h);
    let mut filter = AnmsFilter::new(cfg.clone(), w, h).unwrap();
    let mut history = Vec::with_capacity(n);
    let (mut t, mut corners, mut kept, mut mismatches) = (0i64, 0, 0, 0);
    let corner_p = rng.gen_range(0.1..0.7);
    for _ in 0..n {
        t += if rng.gen_bool(0.2) { 0 } else { rng.gen_range(1..600) };
        let e = Event::new(t, rng.gen_range(0..w as u16), rng.gen_range(0..h as u16), polarity(&mut rng));
        let e = state.update_sae(e).unwrap();
        if rng.gen_bool(corner_p) {
            // small integer range makes ties common; the fraction breaks some of them
            let score = rng.gen_range(18..=36) as f64 + if rng.gen_bool(0.3) { rng.gen::<f64>() } else { 0.0 };
            history.push((e, Some(score)));
            let streamed = filter.process_corner_event(&mut state, &e, score);
            let naive = history_decision(&history, &e, &cfg, w as usize, h as usize);
            corners += 1;
            kept += usize::from(streamed);
            mismatches += usize::from(streamed != naive);
        } else {
            history.push((e, None));
        }
    }
    (corners, kept, mismatches)
}

fn c1_anms_oracle() -> Outcome {
    let start = Instant::now();
    let (mut corners, mut kept, mut mismatches) = (0, 0, 0);
    for i in 0..50u64 {
        let (c, k, m) = one_oracle_stream(1000 + i, SaePolicy::AllEvents, 10_000);
        corners += c;
        kept += k;
        mismatches += m;
    }
    let main = start.elapsed();
    let mut alt = 0;
    for i in 0..5u64 {
        alt += one_oracle_stream(2000 + i, SaePolicy::CornersOnly, 10_000).2;
    }
    outcome(
        mismatches == 0 && alt == 0 && main < Duration::from_secs(60) && kept > 0 && kept < corners,
        format!(
            "50 x 10^4 events, {corners} corner decisions ({kept} kept), {mismatches} mismatches in {}; corners-only SAE: {alt} mismatches",
            secs(main)
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. ring segmentation vs exhaustive arcs

fn exhaustive_split(v: &[Timestamp]) -> Split {
    let n = v.len();
    let mut best: Option<(i128, usize)> = None;
    for len in 1..n {
        for start in 0..n {
            let inside = |i: usize| (i + n - start) % n < len;
            let lo_in = (0..n).filter(|&i| inside(i)).map(|i| v[i]).min().unwrap();
            let hi_out = (0..n).filter(|&i| !inside(i)).map(|i| v[i]).max().unwrap();
            if lo_in <= hi_out {
                continue;
            }
            let gap = i128::from(lo_in) - i128::from(hi_out);
            let better = match best {
                None => true,
                Some((g, l)) => gap > g || (gap == g && len < l),
            };
            if better {
                best = Some((gap, len));
            }
        }
    }
    match best {
        Some((_, len)) => Split { high: len, low: n - len },
        None => Split { high: n, low: 0 },
    }
}

fn random_ring(rng: &mut ChaCha8Rng, n: usize) -> Vec<Timestamp> {
    match rng.gen_range(0..4) {
        // a fresh arc over an older background
        0 => {
            let start = rng.gen_range(0..n);
            let len = rng.gen_range(1..n);
            (0..n)
                .map(|i| {
                    if (i + n - start) % n < len {
                        rng.gen_range(5_000..10_000)
                    } else {
                        rng.gen_range(0..5_000)
                    }
                })
                .collect()
        }
        // few distinct values: plateaus and ties
        1 => (0..n).map(|_| rng.gen_range(0..4) * 100).collect(),
        2 => (0..n).map(|_| if rng.gen_bool(0.2) { i64::MIN } else { rng.gen_range(0..1_000) }).collect(),
        _ => (0..n).map(|_| rng.gen_range(0..1_000_000)).collect(),
    }
}

fn c2_segmentation_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut mismatches, mut out_of_range, mut nondegenerate) = (0, 0, 0);
    for _ in 0..1000 {
        let inner = random_ring(&mut rng, 16);
        let outer = random_ring(&mut rng, 20);
        let (si, so) = (segment_circle(&inner), segment_circle(&outer));
        mismatches += usize::from(si != exhaustive_split(&inner)) + usize::from(so != exhaustive_split(&outer));
        let score = fast_corner_score(&SegmentationResult::new(si, so));
        let expected = (si.high.max(si.low) + so.high.max(so.low)) as f64;
        mismatches += usize::from(score != expected);
        if si.low > 0 && so.low > 0 {
            nondegenerate += 1;
            out_of_range += usize::from(!(18.0..=36.0).contains(&score));
        }
    }
    let took = start.elapsed();
    outcome(
        mismatches == 0 && out_of_range == 0 && took < Duration::from_secs(5),
        format!(
            "10^3 ring pairs, {mismatches} mismatches, {nondegenerate} non-degenerate with {out_of_range} scores outside [18, 36], {}",
            secs(took)
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. decay analytics

fn c3_decay() -> Outcome {
    let e1 = (-1.0f64).exp();
    let e2 = (-2.0f64).exp();
    let mut worst: f64 = 0.0;
    for &(k, tau) in &[(20.0, 0.003), (1.0, 1.0), (7.5, 2e-5), (100.0, 0.05)] {
        worst = worst.max((decay_coefficient(k * tau, k, tau) - e1).abs());
        worst = worst.max((decay_coefficient(2.0 * k * tau, k, tau) - e2).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1_000_000 {
        let age = rng.gen_range(0.0..10.0);
        let k = rng.gen_range(0.5..100.0);
        let tau = rng.gen_range(1e-6..0.1);
        let l = decay_coefficient(age, k, tau);
        bad += usize::from(!(l > 0.0 && l <= 1.0));
    }
    outcome(
        worst < 1e-12 && bad == 0,
        format!("max error at k*tau and 2k*tau {worst:.1e}; {bad} of 10^6 random ages outside (0, 1]"),
    )
}

// ---------------------------------------------------------------------------
// scenes shared by 4-6

struct Scene {
    name: &'static str,
    events: Vec<Event>,
    tracks: TrajectorySet,
}

fn scenes() -> Vec<Scene> {
    let mut out: Vec<Scene> = [
        ("shapes", SceneSpec::shapes_like()),
        ("boxes", SceneSpec::boxes_like()),
        ("single", SceneSpec::single_corner()),
    ]
    .into_iter()
    .map(|(name, spec)| {
        let (events, tracks) = generate(&spec, 7).unwrap();
        Scene { name, events, tracks }
    })
    .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut t = 0;
    let noise = (0..50_000)
        .map(|_| {
            t += rng.gen_range(0..60);
            Event::new(t, rng.gen_range(0..240), rng.gen_range(0..180), polarity(&mut rng))
        })
        .collect();
    out.push(Scene {
        name: "noise",
        events: noise,
        tracks: TrajectorySet::new(vec![]),
    });
    out
}

fn is_subsequence(sub: &[Event], of: &[Event]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|s| it.any(|o| o == s))
}

struct Run {
    scene: &'static str,
    detector: DetectorKind,
    without: MetricsReport,
    with: MetricsReport,
    subset: bool,
}

fn run_all(scenes: &[Scene]) -> Vec<Run> {
    let mut runs = Vec::new();
    for s in scenes {
        let labels: Vec<EventLabel> = s
            .events
            .iter()
            .map(|e| label_event(e, &s.tracks, &LabelThresholds::default()).0)
            .collect();
        for d in DetectorKind::ALL {
            let out = run_pipeline(&s.events, &PipelineConfig::with_detector(d)).unwrap();
            let eval = |anms| evaluate(s.name, Some(d), anms, &s.events, &out.decisions, &labels, EvalWindow::All);
            runs.push(Run {
                scene: s.name,
                detector: d,
                without: eval(false),
                with: eval(true),
                subset: is_subsequence(&out.kept, &out.raw),
            });
        }
    }
    runs
}

fn pct(r: Option<f64>) -> String {
    r.map_or("-".into(), |r| format!("{:.2}%", 100.0 * r))
}

fn c4_subset_and_reduction(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for r in runs {
        let (a, b) = (r.without.n_corner, r.with.n_corner);
        let n = r.without.n_total;
        let ok = r.subset && reduction_rate(b, n) <= reduction_rate(a, n) && (r.scene != "shapes" || b < a);
        pass &= ok;
        if !ok || r.scene == "shapes" {
            notes.push(format!(
                "{}/{} {}->{}{}",
                r.scene,
                r.detector,
                pct(r.without.reduction_rate),
                pct(r.with.reduction_rate),
                if ok { "" } else { " VIOLATION" }
            ));
        }
    }
    outcome(pass, format!("{} runs; {}", runs.len(), notes.join(", ")))
}

fn c5_ratio(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for r in runs.iter().filter(|r| r.scene == "shapes") {
        let ratio = r.with.n_corner as f64 / r.without.n_corner as f64;
        let ok = r.without.n_corner > 0 && ratio <= 0.7;
        pass &= ok;
        notes.push(format!(
            "{} {} / {} = {ratio:.3}{}",
            r.detector,
            pct(r.with.reduction_rate),
            pct(r.without.reduction_rate),
            if ok { "" } else { " (> 0.7)" }
        ));
    }
    outcome(pass, format!("with/without reduction ratio on the shapes scene: {}", notes.join(", ")))
}

fn c6_accuracy(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for r in runs.iter().filter(|r| r.scene == "shapes") {
        let labeled = r.without.confusion.labeled();
        let (a, b) = (r.without.accuracy, r.with.accuracy);
        let ok = labeled >= 10_000 && matches!((a, b), (Some(a), Some(b)) if b >= a);
        pass &= ok;
        notes.push(format!("{} {} -> {}", r.detector, pct(a), pct(b)));
    }
    let labeled = runs.iter().find(|r| r.scene == "shapes").map_or(0, |r| r.without.confusion.labeled());
    outcome(pass, format!("{labeled} labeled events; accuracy {}", notes.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. three-event scenario

fn c7_three_events() -> Outcome {
    let mut s = SurfaceState::new(64, 48);
    let mut f = AnmsFilter::new(AnmsConfig::default(), 64, 48).unwrap();
    let mut corner = |t, x, score| {
        let e = s.update_sae(Event::new(t, x, 20, Polarity::Positive)).unwrap();
        f.process_corner_event(&mut s, &e, score)
    };
    let c = corner(10_000, 20, 30.0);
    let a = corner(11_000, 21, 20.0);
    let b = corner(11_000, 22, 29.5);
    outcome(c && !a && b, format!("C kept={c}, A kept={a}, B kept={b}"))
}

// ---------------------------------------------------------------------------
// 8. label radii

fn c8_labels() -> Outcome {
    let samples = |x| vec![TrackSample { t: 0, x, y: 50.0 }, TrackSample { t: 1_000_000, x, y: 50.0 }];
    let th = LabelThresholds::default();
    let e = Event::new(500_000, 50, 50, Polarity::Positive);
    let mut got = Vec::new();
    for x in [50.5, 53.0, 56.0] {
        let set = TrajectorySet::new(vec![Track::new(0, samples(x), Interpolation::Linear).unwrap()]);
        got.push(label_event(&e, &set, &th));
    }
    let want = [EventLabel::Positive, EventLabel::Negative, EventLabel::Discarded];
    let pass = got.iter().zip(&want).all(|((l, _), w)| l == w);
    let shown: Vec<String> = got
        .iter()
        .map(|(l, d)| format!("{:.1}px->{l}", d.unwrap_or(f64::NAN)))
        .collect();
    outcome(pass, shown.join(", "))
}

// ---------------------------------------------------------------------------
// 9. suppression overhead

fn c9_overhead() -> Outcome {
    let events = stream_of_len(&SceneSpec::shapes_like(), 5, 1_000_000).unwrap();
    let mut pass = events.len() == 1_000_000;
    let mut notes = Vec::new();
    for d in [DetectorKind::EvFast, DetectorKind::ArcFast] {
        let r = bench(&events, &PipelineConfig::with_detector(d), 5, 1_000_000).unwrap();
        let ok = r.increase_rate <= 0.25 && !r.low_confidence;
        pass &= ok;
        notes.push(format!(
            "{d} {:.1} -> {:.1} ns/event ({:+.2}%)",
            r.without.median_ns_per_event,
            r.with.median_ns_per_event,
            100.0 * r.increase_rate
        ));
    }
    outcome(pass, format!("10^6 events, median of 5 warm runs: {}", notes.join(", ")))
}

// ---------------------------------------------------------------------------
// 10. determinism

fn full_run_bytes(seed: u64) -> Vec<u8> {
    let (events, tracks) = generate(&SceneSpec::shapes_like(), seed).unwrap();
    let mut buf = Vec::new();
    write_events(&mut buf, &events).unwrap();
    tracks.write_csv(&mut buf).unwrap();
    let labels: Vec<EventLabel> = events
        .iter()
        .map(|e| label_event(e, &tracks, &LabelThresholds::default()).0)
        .collect();
    for d in DetectorKind::ALL {
        let out = run_pipeline(&events, &PipelineConfig::with_detector(d)).unwrap();
        write_events(&mut buf, &out.raw).unwrap();
        write_events(&mut buf, &out.kept).unwrap();
        for anms in [false, true] {
            let report = evaluate("shapes", Some(d), anms, &events, &out.decisions, &labels, EvalWindow::All);
            buf.extend(serde_json::to_vec(&report).unwrap());
        }
    }
    buf
}

fn c10_determinism() -> Outcome {
    let runs: Vec<Vec<u8>> = (0..3).map(|_| full_run_bytes(42)).collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    let other = full_run_bytes(43);
    outcome(
        same && other != runs[0],
        format!("3 runs of {} bytes identical={same}; a different seed differs={}", runs[0].len(), other != runs[0]),
    )
}

fn main() {
    let mut failures = 0;
    let mut check = |id: u32, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        failures += usize::from(!o.pass);
        println!(
            "[{}] {id:>2} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            secs(start.elapsed())
        );
    };

    check(1, "streaming suppression equals history recomputation", &c1_anms_oracle);
    check(2, "ring segmentation equals exhaustive split", &c2_segmentation_oracle);
    check(3, "decay coefficient analytics", &c3_decay);

    let scenes = scenes();
    let runs = run_all(&scenes);
    check(4, "filtered output is a subset with lower reduction rate", &|| c4_subset_and_reduction(&runs));
    check(5, "reduction ratio at most 0.7 on the shapes scene", &|| c5_ratio(&runs));
    check(6, "accuracy does not drop with suppression", &|| c6_accuracy(&runs));
    check(7, "weak neighbour filtered, strong fresh corner kept", &c7_three_events);
    check(8, "label radii", &c8_labels);
    check(9, "suppression overhead at most 25%", &c9_overhead);
    check(10, "byte-identical repeated runs", &c10_determinism);

    if failures > 0 {
        println!("{failures} acceptance check(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
