use std::path::PathBuf;
use std::process::ExitCode;

use ccnsim::config::SimConfig;
use ccnsim::harness::{self, SweepAxis, SweepSpec};
use ccnsim::policy::PolicyKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ccnsim", version, about = "CDC placement and cooperative caching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the backhaul tree and write edges.csv and summary.txt.
    Topology(ScenarioArgs),
    /// Place CDCs and write placement.csv and curve.csv.
    Place(ScenarioArgs),
    /// Run one scenario and write metrics.csv.
    Simulate(ScenarioArgs),
    /// Run one simulation per axis value and write sweep.csv.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// cdc_count | capacity | neighborhood | s | policy
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Comma-separated policies run at every value (default: the configured one).
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file of key = value lines; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Node file with `id,lat,lon[,density]` rows.
    #[arg(long, conflicts_with = "synthetic")]
    nodes: Option<PathBuf>,
    /// Synthetic borough, e.g. `n=1004,seed=1,hotspots=5`.
    #[arg(long)]
    synthetic: Option<String>,
    /// `auto`, `column`, `synthetic` or an `id,density` file.
    #[arg(long)]
    density: Option<String>,
    /// CDC count or `elbow`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    neighborhood: Option<String>,
    #[arg(long)]
    requests: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    chart: bool,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ScenarioArgs {
    fn resolve(&self) -> ccnsim::Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(p) = &self.nodes {
            cfg.set("nodes", &p.display().to_string())?;
        }
        let flags = [
            ("synthetic", &self.synthetic),
            ("density", &self.density),
            ("k", &self.k),
            ("policy", &self.policy),
            ("neighborhood", &self.neighborhood),
            ("requests", &self.requests),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if self.chart {
            cfg.chart = true;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ccnsim::Error::validation(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> ccnsim::Result<()> {
    match cli.command {
        Command::Topology(args) => {
            let r = harness::cmd_topology(&args.resolve()?)?;
            let s = r.summary;
            println!(
                "{} nodes, {} edges, avg edge {:.1} m -> {}",
                s.node_count,
                s.edge_count,
                s.avg_edge_length_m,
                r.edges_file.display()
            );
        }
        Command::Place(args) => {
            let r = harness::cmd_place(&args.resolve()?)?;
            println!("k = {} -> {}", r.k, r.placement_file.display());
        }
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            log::info!("simulating {} requests with {}", cfg.sim.requests, cfg.sim.policy);
            let r = harness::cmd_simulate(&cfg)?;
            let t = &r.metrics.totals;
            println!(
                "{}: avg latency {:.3} hops, hit ratio {:.4} -> {}",
                cfg.sim.policy,
                t.avg_latency(),
                t.hit_ratio(),
                r.metrics_file.display()
            );
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            policies,
        } => {
            let cfg = scenario.resolve()?;
            let spec = SweepSpec {
                axis: axis.parse::<SweepAxis>()?,
                values,
                policies: policies
                    .iter()
                    .map(|p| p.trim().parse::<PolicyKind>())
                    .collect::<ccnsim::Result<_>>()?,
            };
            let r = harness::cmd_sweep(&cfg, &spec)?;
            println!("{} runs -> {}", r.rows.len(), r.sweep_file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
