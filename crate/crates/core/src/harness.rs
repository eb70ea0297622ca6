//! The work behind each CLI subcommand: build the network a config describes,
//! place CDCs, run simulations and sweeps, and write their output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{CdcCount, DensityChoice, SimConfig, TopologySource};
use crate::error::{Error, Result};
use crate::geo::{build_emst, export_topology, hop_matrix, load_nodes, synth_nodes, BoundingBox, HopMatrix, TopologySummary};
use crate::io_util::{create_output, open_input, output_err};
use crate::placement::{elbow_estimate, export_curve, export_placement, hierarchical_placement};
use crate::policy::PolicyKind;
use crate::population::{assign_density, request_probabilities, DensitySource, HotspotSpec};
use crate::sim::{MetricsSeries, Scenario, SimParams, Simulation};
use crate::svg::{line_chart, Series};
use crate::workload::parse_trace;
use crate::{NodeSet64, PlacementResult64, RequestVector64, Topology64};

/// Nodes, backhaul tree, hop counts and request probabilities.
pub struct Network {
    pub nodes: NodeSet64,
    pub topology: Topology64,
    pub hops: HopMatrix,
    pub requests: RequestVector64,
}

pub fn build_network(cfg: &SimConfig) -> Result<Network> {
    let (nodes, synthetic) = match &cfg.topology {
        TopologySource::Nodes(path) => (load_nodes::<f64>(path)?, None),
        TopologySource::Synthetic(spec) => (synth_nodes(spec.nodes, BoundingBox::BROOKLYN, spec.seed)?, Some(*spec)),
    };
    let hotspot_source = || {
        let (count, seed) = synthetic.map_or((HotspotSpec::default().count, cfg.sim.seed), |s| (s.hotspots, s.seed));
        DensitySource::Synthetic {
            spec: HotspotSpec {
                count,
                ..HotspotSpec::default()
            },
            seed,
        }
    };
    let source = match &cfg.density {
        DensityChoice::Auto if nodes.density_column().is_some() => DensitySource::NodeColumn,
        DensityChoice::Auto | DensityChoice::Synthetic => hotspot_source(),
        DensityChoice::Column => DensitySource::NodeColumn,
        DensityChoice::File(p) => DensitySource::File(p.clone()),
    };
    let population = assign_density(&nodes, &source, cfg.metric)?;
    let topology = build_emst(&nodes, cfg.metric);
    let hops = hop_matrix(&topology);
    let requests = request_probabilities(&population);
    Ok(Network {
        nodes,
        topology,
        hops,
        requests,
    })
}

/// Runs the placement up to the larger of `k` and `k_max` and resolves the
/// CDC count (the elbow of the curve when asked).
pub fn place(net: &Network, cfg: &SimConfig) -> Result<(PlacementResult64, usize)> {
    let n = net.nodes.len();
    let depth = match cfg.k {
        CdcCount::Fixed(k) if k > n => {
            return Err(Error::validation(format!("k = {k} exceeds the node count {n}")));
        }
        CdcCount::Fixed(k) => k.max(cfg.k_max).min(n),
        CdcCount::Elbow => cfg.k_max.min(n),
    };
    let placement = hierarchical_placement(&net.topology, &net.hops, &net.requests, depth)?;
    let k = match cfg.k {
        CdcCount::Fixed(k) => k,
        CdcCount::Elbow => elbow_estimate(&placement.curve())?,
    };
    Ok((placement, k))
}

fn scenario_for(net: &Network, placement: &PlacementResult64, k: usize) -> Result<Scenario> {
    let level = placement
        .level(k)
        .ok_or_else(|| Error::validation(format!("placement has no level for k = {k}")))?;
    Scenario::new(net.hops.clone(), net.requests.clone(), level)
}

/// Network plus the placed scenario for the configured k.
pub fn build_scenario(cfg: &SimConfig) -> Result<(Network, Scenario)> {
    cfg.validate()?;
    let net = build_network(cfg)?;
    let (placement, k) = place(&net, cfg)?;
    let scenario = scenario_for(&net, &placement, k)?;
    Ok((net, scenario))
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write, &Path) -> Result<()>) -> Result<()> {
    let mut out = create_output(path)?;
    body(&mut out, path)?;
    out.flush().map_err(|e| output_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, |w, p| w.write_all(text.as_bytes()).map_err(|e| output_err(p, e)))
}

pub struct TopologyReport {
    pub edges_file: PathBuf,
    pub summary_file: PathBuf,
    pub summary: TopologySummary,
}

/// Writes `edges.csv` and `summary.txt`.
pub fn cmd_topology(cfg: &SimConfig) -> Result<TopologyReport> {
    let net = build_network(cfg)?;
    let summary = net.topology.summary();
    let edges_file = cfg.out.join("edges.csv");
    let summary_file = cfg.out.join("summary.txt");
    write_file(&edges_file, |w, p| export_topology(&net.topology, &net.nodes, w, p))?;
    write_text(
        &summary_file,
        &format!(
            "node_count = {}\nedge_count = {}\ntotal_length_m = {:.3}\navg_edge_length_m = {:.3}\n",
            summary.node_count, summary.edge_count, summary.total_length_m, summary.avg_edge_length_m
        ),
    )?;
    Ok(TopologyReport {
        edges_file,
        summary_file,
        summary,
    })
}

pub struct PlaceReport {
    pub k: usize,
    pub placement_file: PathBuf,
    pub curve_file: PathBuf,
    pub curve: Vec<(usize, f64)>,
}

/// Writes `placement.csv` for the chosen k and the full `curve.csv`.
pub fn cmd_place(cfg: &SimConfig) -> Result<PlaceReport> {
    cfg.validate()?;
    let net = build_network(cfg)?;
    let (placement, k) = place(&net, cfg)?;
    let curve = placement.curve();
    let placement_file = cfg.out.join("placement.csv");
    let curve_file = cfg.out.join("curve.csv");
    write_file(&placement_file, |w, p| {
        export_placement(placement.level(k).expect("level exists"), &net.nodes, w, p)
    })?;
    write_file(&curve_file, |w, p| export_curve(&curve, w, p))?;
    if cfg.chart {
        let pts = curve.iter().map(|&(k, y)| (k as f64, y)).collect();
        let svg = line_chart("Placement cost", "CDCs (k)", "avg weighted hops", &[Series { name: "avg hops", points: pts }]);
        write_text(&cfg.out.join("curve.svg"), &svg)?;
    }
    Ok(PlaceReport {
        k,
        placement_file,
        curve_file,
        curve,
    })
}

pub struct SimulateReport {
    pub metrics_file: PathBuf,
    pub metrics: MetricsSeries,
}

/// Runs one scenario (or replays `cfg.trace`) and writes `metrics.csv`.
pub fn cmd_simulate(cfg: &SimConfig) -> Result<SimulateReport> {
    let (net, scenario) = build_scenario(cfg)?;
    let sim = Simulation::new(&scenario, cfg.sim.clone())?;
    let metrics = match &cfg.trace {
        Some(path) => {
            let trace = parse_trace(open_input(path)?, path, net.nodes.len(), cfg.sim.contents)?;
            sim.replay(&trace)?
        }
        None => sim.run(),
    };
    let metrics_file = cfg.out.join("metrics.csv");
    write_file(&metrics_file, |w, p| metrics.write_csv(w, p))?;
    if cfg.chart {
        let mut seen = 0u64;
        let pts = metrics
            .windows
            .iter()
            .map(|w| {
                seen += w.requests;
                (seen as f64, w.avg_latency)
            })
            .collect();
        let name = cfg.sim.policy.name();
        let svg = line_chart("Average latency", "requests", "hops", &[Series { name, points: pts }]);
        write_text(&cfg.out.join("latency.svg"), &svg)?;
    }
    Ok(SimulateReport {
        metrics_file,
        metrics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    CdcCount,
    Capacity,
    Neighborhood,
    S,
    Policy,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cdc_count" => SweepAxis::CdcCount,
            "capacity" => SweepAxis::Capacity,
            "neighborhood" => SweepAxis::Neighborhood,
            "s" => SweepAxis::S,
            "policy" => SweepAxis::Policy,
            other => {
                return Err(Error::validation(format!(
                    "unknown sweep axis {other:?} (expected cdc_count | capacity | neighborhood | s | policy)"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    /// Policies run at every value; empty means the configured policy.
    pub policies: Vec<PolicyKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: String,
    pub policy: PolicyKind,
    pub avg_latency: f64,
    pub hit_ratio: f64,
}

struct Job {
    value: String,
    k: usize,
    params: SimParams,
}

fn sweep_jobs(cfg: &SimConfig, spec: &SweepSpec, default_k: usize) -> Result<Vec<Job>> {
    if spec.values.is_empty() {
        return Err(Error::validation("sweep needs at least one value"));
    }
    let policies = if spec.policies.is_empty() {
        vec![cfg.sim.policy]
    } else {
        spec.policies.clone()
    };
    let mut jobs = Vec::new();
    for value in &spec.values {
        let v = value.trim();
        let num = |what: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::validation(format!("sweep {what} value {v:?} is not a count")))
        };
        let mut params = cfg.sim.clone();
        let mut k = default_k;
        let mut row_policies = policies.clone();
        match spec.axis {
            SweepAxis::CdcCount => {
                k = num("cdc_count")?;
                if k == 0 {
                    return Err(Error::validation("sweep cdc_count values must be at least 1"));
                }
                // Neighborhoods cannot outgrow the CDC set at small k.
                params.neighborhood = params.neighborhood.min(k - 1);
            }
            SweepAxis::Capacity => params.capacity = num("capacity")?,
            SweepAxis::Neighborhood => params.neighborhood = num("neighborhood")?,
            SweepAxis::S => {
                let s: f64 = v
                    .parse()
                    .map_err(|_| Error::validation(format!("sweep s value {v:?} is not a number")))?;
                params.s_range = (s, s);
            }
            SweepAxis::Policy => row_policies = vec![v.parse()?],
        }
        for policy in row_policies {
            jobs.push(Job {
                value: v.to_string(),
                k,
                params: SimParams { policy, ..params.clone() },
            });
        }
    }
    Ok(jobs)
}

/// Runs every (value, policy) pair in parallel; rows keep the input order.
pub fn run_sweep(cfg: &SimConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let net = build_network(cfg)?;
    let mut depth_cfg = cfg.clone();
    if spec.axis == SweepAxis::CdcCount {
        let deepest = spec
            .values
            .iter()
            .filter_map(|v| v.trim().parse::<usize>().ok())
            .max()
            .unwrap_or(1);
        depth_cfg.k_max = depth_cfg.k_max.max(deepest);
        if let CdcCount::Fixed(k) = depth_cfg.k {
            depth_cfg.k = CdcCount::Fixed(k.min(net.nodes.len()));
        }
    }
    let (placement, default_k) = place(&net, &depth_cfg)?;
    let jobs = sweep_jobs(cfg, spec, default_k)?;
    let mut scenarios: Vec<(usize, Scenario)> = Vec::new();
    for job in &jobs {
        if !scenarios.iter().any(|(k, _)| *k == job.k) {
            if job.k > net.nodes.len() {
                return Err(Error::validation(format!(
                    "cdc_count {} exceeds the node count {}",
                    job.k,
                    net.nodes.len()
                )));
            }
            scenarios.push((job.k, scenario_for(&net, &placement, job.k)?));
        }
    }
    for job in &jobs {
        let sc = &scenarios.iter().find(|(k, _)| *k == job.k).unwrap().1;
        job.params.validate(sc.cdc_count())?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::validation(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let results: Vec<Result<SweepRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let sc = &scenarios.iter().find(|(k, _)| *k == job.k).unwrap().1;
                let m = crate::sim::run(sc, job.params.clone())?;
                Ok(SweepRow {
                    axis_value: job.value.clone(),
                    policy: job.params.policy,
                    avg_latency: m.totals.avg_latency(),
                    hit_ratio: m.totals.hit_ratio(),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let res = (|| -> csv::Result<()> {
        w.write_record(["axis_value", "policy", "avg_latency", "hit_ratio"])?;
        for r in rows {
            w.write_record(&[
                r.axis_value.clone(),
                r.policy.name().to_string(),
                format!("{:.6}", r.avg_latency),
                format!("{:.6}", r.hit_ratio),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    res.map_err(|e| output_err(path, e))
}

pub struct SweepReport {
    pub sweep_file: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Runs the sweep and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &SimConfig, spec: &SweepSpec) -> Result<SweepReport> {
    let rows = run_sweep(cfg, spec)?;
    let sweep_file = cfg.out.join("sweep.csv");
    write_file(&sweep_file, |w, p| write_sweep(&rows, w, p))?;
    if cfg.chart && spec.axis != SweepAxis::Policy {
        let mut series: Vec<Series<'_>> = Vec::new();
        for row in &rows {
            let x: f64 = row.axis_value.parse().unwrap_or(0.0);
            match series.iter_mut().find(|s| s.name == row.policy.name()) {
                Some(s) => s.points.push((x, row.avg_latency)),
                None => series.push(Series {
                    name: row.policy.name(),
                    points: vec![(x, row.avg_latency)],
                }),
            }
        }
        let svg = line_chart("Sweep", "value", "avg latency (hops)", &series);
        write_text(&cfg.out.join("sweep.svg"), &svg)?;
    }
    Ok(SweepReport { sweep_file, rows })
}

/// Removes a previous run's outputs so stale files never mix with new ones.
pub fn clear_outputs(dir: &Path) -> Result<()> {
    for name in ["edges.csv", "summary.txt", "placement.csv", "curve.csv", "metrics.csv", "sweep.csv"] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| output_err(&p, e))?;
        }
    }
    Ok(())
}
