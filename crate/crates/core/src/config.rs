//! Flat `section.key = value` settings: defaults, then a file, then flags.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::anms::SaePolicy;
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::event::OrderPolicy;
use crate::ground_truth::{EvalWindow, GroundTruthOptions, Interpolation, LabelThresholds, DEFAULT_FRAME_RATE};
use crate::metrics::DEFAULT_BENCH_MIN_EVENTS;
use crate::pipeline::PipelineConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub thresholds: LabelThresholds,
    pub interpolation: Interpolation,
    pub window: EvalWindow,
    /// Seconds.
    pub frame_period: f64,
    pub bench_repetitions: usize,
    pub bench_min_events: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            pipeline: PipelineConfig::default(),
            thresholds: LabelThresholds::default(),
            interpolation: Interpolation::Linear,
            window: EvalWindow::default(),
            frame_period: 1.0 / DEFAULT_FRAME_RATE,
            bench_repetitions: 5,
            bench_min_events: DEFAULT_BENCH_MIN_EVENTS,
        }
    }
}

/// Every recognized key, in dump order.
pub const KEYS: &[&str] = &[
    "sensor.width",
    "sensor.height",
    "sensor.order_policy",
    "detector",
    "evharris.queue_capacity",
    "evharris.patch",
    "evharris.sigma",
    "evharris.k",
    "evharris.threshold",
    "anms.enabled",
    "anms.window_radius",
    "anms.k",
    "anms.tau_fallback",
    "anms.tau_neighbors",
    "anms.sae_policy",
    "label.positive",
    "label.negative",
    "label.interpolation",
    "eval.window",
    "eval.frame_period",
    "bench.repetitions",
    "bench.min_events",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn order_policy(key: &str, v: &str) -> Result<OrderPolicy> {
    match v {
        "reject" => Ok(OrderPolicy::Reject),
        "clamp" => Ok(OrderPolicy::Clamp),
        _ => Err(Error::Config(format!("{key}: expected reject or clamp, got `{v}`"))),
    }
}

impl Config {
    /// Assigns one setting. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let p = &mut self.pipeline;
        match key {
            "sensor.width" => p.width = parse(key, v)?,
            "sensor.height" => p.height = parse(key, v)?,
            "sensor.order_policy" => p.order_policy = order_policy(key, v)?,
            "detector" => p.detector = v.parse()?,
            "evharris.queue_capacity" => p.evharris.queue_capacity = parse(key, v)?,
            "evharris.patch" => p.evharris.patch = parse(key, v)?,
            "evharris.sigma" => p.evharris.gauss_sigma = parse(key, v)?,
            "evharris.k" => p.evharris.harris_k = parse(key, v)?,
            "evharris.threshold" => p.evharris.threshold = parse(key, v)?,
            "anms.enabled" => p.anms_enabled = parse(key, v)?,
            "anms.window_radius" => p.anms.window_radius = parse(key, v)?,
            "anms.k" => p.anms.k = parse(key, v)?,
            "anms.tau_fallback" => p.anms.tau_fallback = parse(key, v)?,
            "anms.tau_neighbors" => p.anms.tau_neighbors = parse(key, v)?,
            "anms.sae_policy" => p.anms.sae_policy = v.parse()?,
            "label.positive" => self.thresholds.positive = parse(key, v)?,
            "label.negative" => self.thresholds.negative = parse(key, v)?,
            "label.interpolation" => self.interpolation = v.parse()?,
            "eval.window" => self.window = v.parse()?,
            "eval.frame_period" => self.frame_period = parse(key, v)?,
            "bench.repetitions" => self.bench_repetitions = parse(key, v)?,
            "bench.min_events" => self.bench_min_events = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v)
    }

    /// Applies a settings file: TOML (tables flatten to dotted keys), or
    /// plain `key = value` lines with `#` comments.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        match text.parse::<toml::Table>() {
            Ok(table) => {
                let mut flat = Vec::new();
                flatten("", &table, &mut flat);
                for (k, v) in flat {
                    self.set(&k, &v)?;
                }
            }
            Err(_) => {
                for (i, line) in text.lines().enumerate() {
                    let line = line.split('#').next().unwrap_or("").trim();
                    if line.is_empty() {
                        continue;
                    }
                    self.set_pair(line)
                        .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
                }
            }
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.merge_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.pipeline;
        Some(match key {
            "sensor.width" => p.width.to_string(),
            "sensor.height" => p.height.to_string(),
            "sensor.order_policy" => match p.order_policy {
                OrderPolicy::Reject => "reject".into(),
                OrderPolicy::Clamp => "clamp".into(),
            },
            "detector" => p.detector.to_string(),
            "evharris.queue_capacity" => p.evharris.queue_capacity.to_string(),
            "evharris.patch" => p.evharris.patch.to_string(),
            "evharris.sigma" => p.evharris.gauss_sigma.to_string(),
            "evharris.k" => p.evharris.harris_k.to_string(),
            "evharris.threshold" => p.evharris.threshold.to_string(),
            "anms.enabled" => p.anms_enabled.to_string(),
            "anms.window_radius" => p.anms.window_radius.to_string(),
            "anms.k" => p.anms.k.to_string(),
            "anms.tau_fallback" => p.anms.tau_fallback.to_string(),
            "anms.tau_neighbors" => p.anms.tau_neighbors.to_string(),
            "anms.sae_policy" => p.anms.sae_policy.to_string(),
            "label.positive" => self.thresholds.positive.to_string(),
            "label.negative" => self.thresholds.negative.to_string(),
            "label.interpolation" => match self.interpolation {
                Interpolation::Linear => "linear".into(),
                Interpolation::Cubic => "cubic".into(),
            },
            "eval.window" => self.window.to_string(),
            "eval.frame_period" => self.frame_period.to_string(),
            "bench.repetitions" => self.bench_repetitions.to_string(),
            "bench.min_events" => self.bench_min_events.to_string(),
            _ => return None,
        })
    }

    /// `key = value` lines for every effective setting; readable by [`Config::merge_str`].
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if p.width == 0 || p.height == 0 || p.width > u32::from(u16::MAX) + 1 || p.height > u32::from(u16::MAX) + 1 {
            return Err(Error::Config(format!("bad sensor size {}x{}", p.width, p.height)));
        }
        p.evharris.validate()?;
        p.anms.validate()?;
        let t = &self.thresholds;
        if !(t.positive >= 0.0 && t.negative >= t.positive) {
            return Err(Error::Config("label radii must satisfy 0 <= positive <= negative".into()));
        }
        if !(self.frame_period > 0.0) {
            return Err(Error::Config("eval.frame_period must be > 0".into()));
        }
        Ok(())
    }

    pub fn ground_truth_options(&self) -> GroundTruthOptions {
        GroundTruthOptions {
            thresholds: self.thresholds,
            window: self.window,
            frame_period: self.frame_period,
            width: self.pipeline.width,
            height: self.pipeline.height,
        }
    }

    pub fn detector(&self) -> DetectorKind {
        self.pipeline.detector
    }

    pub fn sae_policy(&self) -> SaePolicy {
        self.pipeline.anms.sae_policy
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            toml::Value::String(s) => out.push((key, s.clone())),
            other => out.push((key, other.to_string())),
        }
    }
}
