//! Flat `key = value` scenario files.
//!
//! Every key has a default, so an empty file is a valid scenario (a synthetic
//! Brooklyn-sized borough with the reference simulation parameters). Lines
//! starting with `#` are comments. [`SimConfig::to_text`] writes every key and
//! parses back to an identical config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::DistanceMetric;
use crate::io_util::open_input;
use crate::sim::{BetaMode, SimParams};

/// Synthetic borough: uniform nodes in the Brooklyn box with hotspot densities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub seed: u64,
    pub hotspots: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            nodes: 1004,
            seed: 1,
            hotspots: 5,
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    /// `n=<N>,seed=<S>,hotspots=<H>`; omitted fields keep their defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("synthetic field {part:?} is not key=value")))?;
            match k.trim() {
                "n" => spec.nodes = parse_num("synthetic n", v)?,
                "seed" => spec.seed = parse_num("synthetic seed", v)?,
                "hotspots" => spec.hotspots = parse_num("synthetic hotspots", v)?,
                other => return Err(Error::validation(format!("unknown synthetic field {other:?}"))),
            }
        }
        if spec.nodes == 0 {
            return Err(Error::validation("synthetic n must be at least 1"));
        }
        Ok(spec)
    }
}

impl std::fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n={},seed={},hotspots={}", self.nodes, self.seed, self.hotspots)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySource {
    Nodes(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityChoice {
    /// Node-file column when present, otherwise synthetic hotspots.
    Auto,
    Column,
    Synthetic,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdcCount {
    Fixed(usize),
    Elbow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub topology: TopologySource,
    pub density: DensityChoice,
    pub metric: DistanceMetric,
    pub k: CdcCount,
    /// Largest k on the placement curve (clamped to the node count).
    pub k_max: usize,
    pub sim: SimParams,
    pub out: PathBuf,
    /// Sweep parallelism; 0 uses every core.
    pub workers: usize,
    pub trace: Option<PathBuf>,
    pub chart: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: TopologySource::Synthetic(SyntheticSpec::default()),
            density: DensityChoice::Auto,
            metric: DistanceMetric::Haversine,
            k: CdcCount::Fixed(25),
            k_max: 40,
            sim: SimParams::default(),
            out: PathBuf::from("out"),
            workers: 0,
            trace: None,
            chart: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::validation(format!("{key}: cannot parse {:?}", v.trim())))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::validation(format!("{key}: expected true or false, got {other:?}"))),
    }
}

fn parse_pair<T: FromStr>(key: &str, v: &str) -> Result<(T, T)> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| Error::validation(format!("{key}: expected <lo>,<hi>, got {v:?}")))?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

impl SimConfig {
    /// All recognised keys, in the order [`to_text`](Self::to_text) writes them.
    pub const KEYS: [&'static str; 27] = [
        "nodes",
        "synthetic",
        "density",
        "metric",
        "k",
        "k_max",
        "neighborhood",
        "policy",
        "contents",
        "capacity",
        "alpha",
        "beta",
        "s_range",
        "epoch",
        "window",
        "requests",
        "seed",
        "origin",
        "cooperative",
        "local_origin_penalty",
        "mle_window",
        "mle_interval",
        "workers",
        "trace",
        "out",
        "chart",
        "hotspots",
    ];

    /// Applies one `key = value` setting; used for both files and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let sim = &mut self.sim;
        match key.trim() {
            "nodes" => self.topology = TopologySource::Nodes(PathBuf::from(v)),
            "synthetic" => self.topology = TopologySource::Synthetic(v.parse()?),
            "hotspots" => match &mut self.topology {
                TopologySource::Synthetic(s) => s.hotspots = parse_num(key, v)?,
                TopologySource::Nodes(_) => {
                    return Err(Error::validation("hotspots only applies to synthetic topologies"))
                }
            },
            "density" => {
                self.density = match v {
                    "auto" => DensityChoice::Auto,
                    "column" => DensityChoice::Column,
                    "synthetic" => DensityChoice::Synthetic,
                    path => DensityChoice::File(PathBuf::from(path)),
                }
            }
            "metric" => {
                self.metric = match v {
                    "haversine" => DistanceMetric::Haversine,
                    "planar" => DistanceMetric::Planar,
                    other => return Err(Error::validation(format!("unknown metric {other:?}"))),
                }
            }
            "k" => {
                self.k = if v == "elbow" {
                    CdcCount::Elbow
                } else {
                    CdcCount::Fixed(parse_num(key, v)?)
                }
            }
            "k_max" => self.k_max = parse_num(key, v)?,
            "neighborhood" => sim.neighborhood = parse_num(key, v)?,
            "policy" => sim.policy = v.parse()?,
            "contents" => sim.contents = parse_num(key, v)?,
            "capacity" => sim.capacity = parse_num(key, v)?,
            "alpha" => sim.alpha = parse_num(key, v)?,
            "beta" => {
                sim.beta = if v == "formula" {
                    BetaMode::Formula
                } else {
                    BetaMode::Fixed(parse_num(key, v)?)
                }
            }
            "s_range" => sim.s_range = parse_pair(key, v)?,
            "epoch" => sim.epoch_len = parse_num(key, v)?,
            "window" => sim.window = parse_num(key, v)?,
            "requests" => sim.requests = parse_num(key, v)?,
            "seed" => sim.seed = parse_num(key, v)?,
            "origin" => sim.origin_range = parse_pair(key, v)?,
            "cooperative" => {
                sim.cooperative = if v == "auto" { None } else { Some(parse_bool(key, v)?) }
            }
            "local_origin_penalty" => sim.local_origin_penalty = parse_bool(key, v)?,
            "mle_window" => sim.mle_window = parse_num(key, v)?,
            "mle_interval" => sim.mle_interval = parse_num(key, v)?,
            "workers" => self.workers = parse_num(key, v)?,
            "trace" => self.trace = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "chart" => self.chart = parse_bool(key, v)?,
            other => return Err(Error::validation(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx as u64 + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            cfg.set(k, v).map_err(|e| match e {
                Error::Validation(msg) => parse_err(msg),
                e => e,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::io::read_to_string(open_input(path)?).map_err(|source| Error::Input {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.topology {
            TopologySource::Nodes(p) => put("nodes", p.display().to_string()),
            TopologySource::Synthetic(spec) => put("synthetic", spec.to_string()),
        }
        put(
            "density",
            match &self.density {
                DensityChoice::Auto => "auto".into(),
                DensityChoice::Column => "column".into(),
                DensityChoice::Synthetic => "synthetic".into(),
                DensityChoice::File(p) => p.display().to_string(),
            },
        );
        put(
            "metric",
            match self.metric {
                DistanceMetric::Haversine => "haversine",
                DistanceMetric::Planar => "planar",
            }
            .into(),
        );
        put(
            "k",
            match self.k {
                CdcCount::Fixed(k) => k.to_string(),
                CdcCount::Elbow => "elbow".into(),
            },
        );
        put("k_max", self.k_max.to_string());
        let sim = &self.sim;
        put("neighborhood", sim.neighborhood.to_string());
        put("policy", sim.policy.name().into());
        put("contents", sim.contents.to_string());
        put("capacity", sim.capacity.to_string());
        put("alpha", sim.alpha.to_string());
        put(
            "beta",
            match sim.beta {
                BetaMode::Formula => "formula".into(),
                BetaMode::Fixed(b) => b.to_string(),
            },
        );
        put("s_range", format!("{},{}", sim.s_range.0, sim.s_range.1));
        put("epoch", sim.epoch_len.to_string());
        put("window", sim.window.to_string());
        put("requests", sim.requests.to_string());
        put("seed", sim.seed.to_string());
        put("origin", format!("{},{}", sim.origin_range.0, sim.origin_range.1));
        put(
            "cooperative",
            sim.cooperative.map_or("auto".into(), |c| c.to_string()),
        );
        put("local_origin_penalty", sim.local_origin_penalty.to_string());
        put("mle_window", sim.mle_window.to_string());
        put("mle_interval", sim.mle_interval.to_string());
        put("workers", self.workers.to_string());
        if let Some(t) = &self.trace {
            put("trace", t.display().to_string());
        }
        put("out", self.out.display().to_string());
        put("chart", self.chart.to_string());
        s
    }

    /// Checks that do not need the topology; the rest happens when the
    /// scenario is built.
    pub fn validate(&self) -> Result<()> {
        if let CdcCount::Fixed(0) = self.k {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.k_max == 0 {
            return Err(Error::validation("k_max must be at least 1"));
        }
        self.sim.validate(0)
    }
}
