use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use evnms::config::Config;
use evnms::ground_truth::{label_event, write_labels, EventLabel, TrajectorySet};
use evnms::io::{read_events_file, write_events_file};
use evnms::metrics::{bench, evaluate, weighted_by_events, BenchReport, MetricsReport};
use evnms::pipeline::run_pipeline;
use evnms::synth::{self, SceneSpec};
use evnms::{Error, Event};

const FORMATS: &str = "\
Files:
  events     one event per line: `t x y p`, t in seconds, p in {0, 1}
  tracks     CSV `track_id,t_seconds,x,y`, one row per sample
  labels     CSV `t,x,y,p,label,distance`
  eval/bench reports: CSV rows (--csv) and a JSON document (--json)
  config     TOML, or `key = value` lines; see --print-config for every key

Exit status: 0 ok, 2 usage or config, 3 I/O, 4 malformed input, 5 ordering or bounds.";

#[derive(Parser)]
#[command(name = "evnms", version, about = "Corner detection and asynchronous NMS for event streams", after_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic scene to an event stream and corner tracks.
    Synth(SynthArgs),
    /// Run a detector; write the raw corner stream.
    Detect(DetectArgs),
    /// Run a detector plus suppression; write the filtered corner stream.
    Filter(FilterArgs),
    /// Label events by distance to corner tracks.
    Label(LabelArgs),
    /// Reduction rate and confusion metrics over one or more scenes.
    Eval(EvalArgs),
    /// Per-event timing with and without suppression.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Settings {
    /// Settings file, applied over the defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print every effective setting and exit.
    #[arg(long)]
    print_config: bool,
    /// evharris, evfast or arcfast.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    /// Decay multiplier.
    #[arg(long)]
    k: Option<f64>,
    /// Seconds, used when a window holds no earlier event.
    #[arg(long)]
    tau_fallback: Option<f64>,
    #[arg(long)]
    window_radius: Option<u32>,
    /// all-events or corners-only.
    #[arg(long)]
    sae_policy: Option<String>,
    #[arg(long)]
    harris_threshold: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long, value_name = "FILE", conflicts_with = "scene", required_unless_present = "scene")]
    spec: Option<PathBuf>,
    /// Built-in scene: shapes, boxes or single.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_name = "FILE")]
    tracks: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the unfiltered detector output.
    #[arg(long, value_name = "FILE")]
    raw_out: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long, value_name = "FILE")]
    events: PathBuf,
    #[arg(long, value_name = "FILE")]
    tracks: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    settings: Settings,
    /// Event file per scene; repeatable.
    #[arg(long, value_name = "FILE", required = true)]
    events: Vec<PathBuf>,
    /// Track file per scene, paired with --events in order.
    #[arg(long, value_name = "FILE", required = true)]
    tracks: Vec<PathBuf>,
    /// Scene names; default to the event file stems.
    #[arg(long)]
    name: Vec<String>,
    /// Count only events that survive suppression.
    #[arg(long)]
    anms: bool,
    /// all, frames:A-B or S..E (seconds).
    #[arg(long)]
    window: Option<String>,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long, value_name = "FILE", conflicts_with = "synthetic", required_unless_present = "synthetic")]
    events: Option<PathBuf>,
    /// Time a synthetic stream of this many events instead.
    #[arg(long, value_name = "N", requires = "seed")]
    synthetic: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

/// An error tagged with the stage and input it came from.
struct Failure {
    stage: &'static str,
    context: String,
    err: Error,
}

impl Failure {
    fn code(&self) -> u8 {
        match self.err {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::OutOfBounds { .. } | Error::OutOfOrder { .. } | Error::SceneBounds { .. } => 5,
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

trait Stage<T> {
    fn at(self, stage: &'static str, context: impl std::fmt::Display) -> Run<T>;
}

impl<T> Stage<T> for evnms::Result<T> {
    fn at(self, stage: &'static str, context: impl std::fmt::Display) -> Run<T> {
        self.map_err(|err| Failure {
            stage,
            context: context.to_string(),
            err,
        })
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn at(self, stage: &'static str, context: impl std::fmt::Display) -> Run<T> {
        let context = context.to_string();
        self.map_err(|e| Failure {
            stage,
            err: Error::io(&context, e),
            context: String::new(),
        })
    }
}

fn load_config(s: &Settings) -> Run<Config> {
    let mut c = Config::default();
    if let Some(p) = &s.config {
        c.merge_file(p).at("config", p.display())?;
    }
    for pair in &s.set {
        c.set_pair(pair).at("config", "--set")?;
    }
    let flags = [
        ("detector", "--detector", s.detector.clone()),
        ("sensor.width", "--width", s.width.map(|v| v.to_string())),
        ("sensor.height", "--height", s.height.map(|v| v.to_string())),
        ("anms.k", "--k", s.k.map(|v| v.to_string())),
        ("anms.tau_fallback", "--tau-fallback", s.tau_fallback.map(|v| v.to_string())),
        ("anms.window_radius", "--window-radius", s.window_radius.map(|v| v.to_string())),
        ("anms.sae_policy", "--sae-policy", s.sae_policy.clone()),
        ("evharris.threshold", "--harris-threshold", s.harris_threshold.map(|v| v.to_string())),
    ];
    for (key, flag, value) in flags {
        if let Some(v) = value {
            c.set(key, &v).at("config", flag)?;
        }
    }
    c.validate().at("config", "effective settings")?;
    Ok(c)
}

fn read_events(stage: &'static str, path: &Path) -> Run<Vec<Event>> {
    read_events_file(path).at(stage, path.display())
}

fn create(stage: &'static str, path: &Path) -> Run<BufWriter<File>> {
    File::create(path).map(BufWriter::new).at(stage, path.display())
}

fn rate(n: usize, total: usize) -> String {
    if total == 0 {
        "n/a".into()
    } else {
        format!("{:.4}%", 100.0 * n as f64 / total as f64)
    }
}

fn synth_cmd(a: SynthArgs) -> Run<()> {
    let spec = match (&a.spec, a.scene.as_deref()) {
        (Some(p), _) => SceneSpec::from_file(p).at("synth", p.display())?,
        (None, Some("shapes")) => SceneSpec::shapes_like(),
        (None, Some("boxes")) => SceneSpec::boxes_like(),
        (None, Some("single")) => SceneSpec::single_corner(),
        (None, other) => {
            return Err(Error::Config(format!(
                "unknown scene `{}` (expected shapes, boxes or single)",
                other.unwrap_or("")
            )))
            .at("synth", "--scene")
        }
    };
    let (events, tracks) = synth::generate(&spec, a.seed).at("synth", "scene")?;
    write_events_file(&a.out, &events).at("synth", a.out.display())?;
    if let Some(p) = &a.tracks {
        let mut w = create("synth", p)?;
        tracks.write_csv(&mut w).at("synth", p.display())?;
    }
    println!(
        "synth: {} events, {} tracks, {:.3} s, seed {}",
        events.len(),
        tracks.tracks.len(),
        spec.duration,
        a.seed
    );
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> Run<()> {
    let mut c = load_config(&a.settings)?;
    if a.settings.print_config {
        print!("{}", c.dump());
        return Ok(());
    }
    c.pipeline.anms_enabled = false;
    let events = read_events("detect", &a.input)?;
    let out = run_pipeline(&events, &c.pipeline).at("detect", a.input.display())?;
    write_events_file(&a.out, &out.raw).at("detect", a.out.display())?;
    println!(
        "detect: {}: {} events, {} corners, reduction rate {}, {} skipped at the border",
        c.detector(),
        events.len(),
        out.raw.len(),
        rate(out.raw.len(), events.len()),
        out.stats.skipped
    );
    Ok(())
}

fn filter_cmd(a: FilterArgs) -> Run<()> {
    let mut c = load_config(&a.settings)?;
    if a.settings.print_config {
        print!("{}", c.dump());
        return Ok(());
    }
    c.pipeline.anms_enabled = true;
    let events = read_events("filter", &a.input)?;
    let out = run_pipeline(&events, &c.pipeline).at("filter", a.input.display())?;
    write_events_file(&a.out, &out.kept).at("filter", a.out.display())?;
    if let Some(p) = &a.raw_out {
        write_events_file(p, &out.raw).at("filter", p.display())?;
    }
    println!(
        "filter: {}: {} events, {} raw corners ({}), {} kept ({})",
        c.detector(),
        events.len(),
        out.raw.len(),
        rate(out.raw.len(), events.len()),
        out.kept.len(),
        rate(out.kept.len(), events.len())
    );
    Ok(())
}

fn load_tracks(stage: &'static str, c: &Config, path: &Path) -> Run<TrajectorySet> {
    let t = TrajectorySet::read_csv_file(path, c.interpolation).at(stage, path.display())?;
    t.check_bounds(c.pipeline.width, c.pipeline.height)
        .at(stage, path.display())?;
    Ok(t)
}

fn label_cmd(a: LabelArgs) -> Run<()> {
    let c = load_config(&a.settings)?;
    if a.settings.print_config {
        print!("{}", c.dump());
        return Ok(());
    }
    let events = read_events("label", &a.events)?;
    let tracks = load_tracks("label", &c, &a.tracks)?;
    let labels: Vec<_> = events
        .par_iter()
        .map(|e| label_event(e, &tracks, &c.thresholds))
        .collect();
    let mut w = create("label", &a.out)?;
    write_labels(&mut w, &events, &labels).at("label", a.out.display())?;
    let count = |l: EventLabel| labels.iter().filter(|(x, _)| *x == l).count();
    println!(
        "label: {} events: {} positive, {} negative, {} discarded",
        events.len(),
        count(EventLabel::Positive),
        count(EventLabel::Negative),
        count(EventLabel::Discarded)
    );
    Ok(())
}

fn eval_scene(c: &Config, anms: bool, name: &str, events: &Path, tracks: &Path) -> Run<MetricsReport> {
    let ev = read_events("eval", events)?;
    let tr = load_tracks("eval", c, tracks)?;
    let labels: Vec<EventLabel> = ev.iter().map(|e| label_event(e, &tr, &c.thresholds).0).collect();
    let mut pc = c.pipeline.clone();
    pc.anms_enabled = anms;
    let out = run_pipeline(&ev, &pc).at("eval", events.display())?;
    Ok(evaluate(name, Some(pc.detector), anms, &ev, &out.decisions, &labels, c.window))
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into())
}

#[derive(Serialize)]
struct EvalDocument<'a> {
    config: Vec<(&'static str, String)>,
    reports: &'a [MetricsReport],
    overall: Option<MetricsReport>,
}

fn eval_cmd(a: EvalArgs) -> Run<()> {
    let mut c = load_config(&a.settings)?;
    if let Some(w) = &a.window {
        c.set("eval.window", w).at("config", "--window")?;
    }
    if a.settings.print_config {
        print!("{}", c.dump());
        return Ok(());
    }
    if a.events.len() != a.tracks.len() || (!a.name.is_empty() && a.name.len() != a.events.len()) {
        return Err(Error::Config(
            "--events, --tracks and --name must be given the same number of times".into(),
        ))
        .at("eval", "arguments");
    }
    let names: Vec<String> = if a.name.is_empty() {
        a.events
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect()
    } else {
        a.name.clone()
    };
    let mut reports = (0..a.events.len())
        .into_par_iter()
        .map(|i| eval_scene(&c, a.anms, &names[i], &a.events[i], &a.tracks[i]))
        .collect::<Run<Vec<_>>>()?;
    reports.sort_by(|x, y| x.scene.cmp(&y.scene));
    let overall = if reports.len() > 1 { weighted_by_events(&reports) } else { None };

    println!(
        "{:<16} {:<9} {:<8} {:>10} {:>9} {:>8} {:>7} {:>7} {:>7}",
        "scene", "detector", "anms", "events", "corners", "RR%", "TPR%", "FPR%", "ACC%"
    );
    for r in reports.iter().chain(&overall) {
        println!(
            "{:<16} {:<9} {:<8} {:>10} {:>9} {:>8} {:>7} {:>7} {:>7}",
            r.scene,
            r.detector.map(|d| d.name()).unwrap_or("-"),
            if r.anms { "with" } else { "without" },
            r.n_total,
            r.n_corner,
            pct(r.reduction_rate),
            pct(r.tpr),
            pct(r.fpr),
            pct(r.accuracy)
        );
    }
    if let Some(p) = &a.csv {
        let mut w = create("eval", p)?;
        let mut body = format!("{}\n", MetricsReport::CSV_HEADER);
        for r in reports.iter().chain(&overall) {
            body += &r.csv_row();
            body.push('\n');
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .at("eval", p.display())?;
    }
    if let Some(p) = &a.json {
        let doc = EvalDocument {
            config: config_pairs(&c),
            reports: &reports,
            overall,
        };
        write_json("eval", p, &doc)?;
    }
    Ok(())
}

fn config_pairs(c: &Config) -> Vec<(&'static str, String)> {
    evnms::config::KEYS
        .iter()
        .map(|k| (*k, c.get(k).unwrap_or_default()))
        .collect()
}

fn write_json<T: Serialize>(stage: &'static str, path: &Path, v: &T) -> Run<()> {
    let mut w = create(stage, path)?;
    serde_json::to_writer_pretty(&mut w, v)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .at(stage, path.display())
}

#[derive(Serialize)]
struct BenchDocument<'a> {
    config: Vec<(&'static str, String)>,
    report: &'a BenchReport,
}

fn bench_cmd(a: BenchArgs) -> Run<()> {
    let c = load_config(&a.settings)?;
    if a.settings.print_config {
        print!("{}", c.dump());
        return Ok(());
    }
    let events = match (&a.events, a.synthetic, a.seed) {
        (Some(p), _, _) => read_events("bench", p)?,
        (None, Some(n), Some(seed)) => synth::stream_of_len(&SceneSpec::shapes_like(), seed, n).at("bench", "synthetic stream")?,
        _ => unreachable!("clap enforces an input"),
    };
    let reps = a.repetitions.unwrap_or(c.bench_repetitions);
    let r = bench(&events, &c.pipeline, reps, c.bench_min_events).at("bench", "timing run")?;
    if r.low_confidence {
        eprintln!(
            "bench: warning: {} events is below the {} minimum, results are low-confidence",
            r.n_events, c.bench_min_events
        );
    }
    println!(
        "bench: {}: {} events x {} runs: {:.1} ns/event without, {:.1} with, +{:.1} ns ({:+.2}%)",
        r.detector,
        r.n_events,
        r.repetitions,
        r.without.median_ns_per_event,
        r.with.median_ns_per_event,
        r.increase_ns,
        100.0 * r.increase_rate
    );
    if let Some(p) = &a.csv {
        let mut w = create("bench", p)?;
        writeln!(w, "detector,n_events,repetitions,median_without_ns,mean_without_ns,median_with_ns,mean_with_ns,increase_rate,low_confidence")
            .and_then(|_| {
                writeln!(
                    w,
                    "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.6},{}",
                    r.detector,
                    r.n_events,
                    r.repetitions,
                    r.without.median_ns_per_event,
                    r.without.mean_ns_per_event,
                    r.with.median_ns_per_event,
                    r.with.mean_ns_per_event,
                    r.increase_rate,
                    r.low_confidence
                )
            })
            .and_then(|_| w.flush())
            .at("bench", p.display())?;
    }
    if let Some(p) = &a.json {
        write_json("bench", p, &BenchDocument { config: config_pairs(&c), report: &r })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(a) => synth_cmd(a),
        Cmd::Detect(a) => detect_cmd(a),
        Cmd::Filter(a) => filter_cmd(a),
        Cmd::Label(a) => label_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Bench(a) => bench_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.err.to_string();
            if f.context.is_empty() || msg.starts_with(&f.context) {
                eprintln!("evnms {}: {msg}", f.stage);
            } else {
                eprintln!("evnms {}: {}: {msg}", f.stage, f.context);
            }
            ExitCode::from(f.code())
        }
    }
}
