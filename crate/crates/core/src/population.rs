//! Per-node population densities and the request probabilities derived from them.
//!
//! Densities come from the node file's fourth column, a separate `id,density`
//! file (e.g. a daytime and a nighttime file over the same nodes), or the
//! synthetic Gaussian-hotspot generator.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{DistanceMetric, NodeId, NodeSet};
use crate::io_util::open_input;
use crate::scalar::{compensated_sum, Real};

/// Persons per km² around each cloudlet.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationMap<T> {
    density: Vec<T>,
}

impl<T: Real> PopulationMap<T> {
    pub fn new(density: Vec<T>) -> Result<Self> {
        if let Some(i) = density.iter().position(|d| !d.is_finite() || *d < T::zero()) {
            return Err(Error::validation(format!(
                "density of node {i} is {} (must be finite and non-negative)",
                density[i]
            )));
        }
        if !density.iter().any(|d| *d > T::zero()) {
            return Err(Error::validation("all densities are zero"));
        }
        Ok(PopulationMap { density })
    }

    pub fn density(&self) -> &[T] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }
}

/// Request probability per node, proportional to density.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestVector<T> {
    r: Vec<T>,
}

impl<T: Real> RequestVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.r
    }

    pub fn get(&self, i: NodeId) -> T {
        self.r[i]
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Total request mass of a group of nodes.
    pub fn mass(&self, members: &[NodeId]) -> T {
        compensated_sum(members.iter().map(|&m| self.r[m]))
    }
}

/// `r_i = γ_i / Σ_j γ_j`.
pub fn request_probabilities<T: Real>(pop: &PopulationMap<T>) -> RequestVector<T> {
    let total = compensated_sum(pop.density.iter().copied());
    RequestVector {
        r: pop.density.iter().map(|&g| g / total).collect(),
    }
}

/// One Gaussian bump of the synthetic density surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hotspot {
    pub center: NodeId,
    pub amplitude: f64,
    /// Standard deviation, in the distance metric's units (meters for haversine).
    pub spread: f64,
}

/// Parameters of the synthetic density generator. Each hotspot is centered on a
/// node drawn from the seed, with amplitude and spread drawn uniformly from the
/// given ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct HotspotSpec {
    pub count: usize,
    pub amplitude: (f64, f64),
    pub spread: (f64, f64),
    pub floor: f64,
}

impl Default for HotspotSpec {
    fn default() -> Self {
        HotspotSpec {
            count: 5,
            amplitude: (10_000.0, 30_000.0),
            spread: (800.0, 2_500.0),
            floor: 2_000.0,
        }
    }
}

impl HotspotSpec {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if !ok_range(self.amplitude) {
            return Err(Error::validation(format!(
                "hotspot amplitude range {:?} must be non-negative and ordered",
                self.amplitude
            )));
        }
        if !ok_range(self.spread) {
            return Err(Error::validation(format!(
                "hotspot spread range {:?} must be non-negative and ordered",
                self.spread
            )));
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(Error::validation(format!("density floor {} must be >= 0", self.floor)));
        }
        Ok(())
    }

    /// Draws concrete hotspots for a node set of size `n`.
    pub fn draw(&self, n: usize, seed: u64) -> Result<Vec<Hotspot>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::validation("cannot place hotspots on an empty node set"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..self.count)
            .map(|_| Hotspot {
                center: rng.gen_range(0..n),
                amplitude: draw_in(&mut rng, self.amplitude),
                spread: draw_in(&mut rng, self.spread),
            })
            .collect())
    }
}

fn draw_in(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// `floor + Σ_h A_h exp(-d(node, center_h)² / 2σ_h²)` at every node.
pub fn gaussian_bumps<T: Real>(
    nodes: &NodeSet<T>,
    hotspots: &[Hotspot],
    floor: f64,
    metric: DistanceMetric,
) -> Result<Vec<T>> {
    for h in hotspots {
        if h.center >= nodes.len() {
            return Err(Error::validation(format!("hotspot center {} is not a node", h.center)));
        }
        if !(h.amplitude >= 0.0 && h.spread >= 0.0) {
            return Err(Error::validation("hotspot amplitude and spread must be non-negative"));
        }
    }
    if !(floor >= 0.0) {
        return Err(Error::validation("density floor must be non-negative"));
    }
    Ok(nodes
        .nodes()
        .iter()
        .map(|n| {
            let bumps: f64 = hotspots
                .iter()
                .map(|h| {
                    let d = metric.distance(n, nodes.node(h.center)).as_f64();
                    if h.spread == 0.0 {
                        if d == 0.0 {
                            h.amplitude
                        } else {
                            0.0
                        }
                    } else {
                        h.amplitude * (-(d * d) / (2.0 * h.spread * h.spread)).exp()
                    }
                })
                .sum();
            T::lit(floor + bumps)
        })
        .collect())
}

/// Deterministic synthetic densities standing in for gridded census data.
pub fn synth_density<T: Real>(
    nodes: &NodeSet<T>,
    spec: &HotspotSpec,
    seed: u64,
    metric: DistanceMetric,
) -> Result<Vec<T>> {
    let hotspots = spec.draw(nodes.len(), seed)?;
    gaussian_bumps(nodes, &hotspots, spec.floor, metric)
}

/// Where a scenario takes its densities from.
#[derive(Clone, Debug, PartialEq)]
pub enum DensitySource {
    /// The optional fourth column of the node file.
    NodeColumn,
    /// A separate `id,density` file keyed by the node file's original ids.
    File(PathBuf),
    Synthetic { spec: HotspotSpec, seed: u64 },
}

pub fn assign_density<T: Real>(
    nodes: &NodeSet<T>,
    source: &DensitySource,
    metric: DistanceMetric,
) -> Result<PopulationMap<T>> {
    match source {
        DensitySource::NodeColumn => {
            let col = nodes
                .density_column()
                .ok_or_else(|| Error::validation("node file has no density column"))?;
            PopulationMap::new(col.to_vec())
        }
        DensitySource::File(path) => load_density(path, nodes),
        DensitySource::Synthetic { spec, seed } => {
            PopulationMap::new(synth_density(nodes, spec, *seed, metric)?)
        }
    }
}

pub fn load_density<T: Real>(path: &Path, nodes: &NodeSet<T>) -> Result<PopulationMap<T>> {
    parse_density(open_input(path)?, path, nodes)
}

pub fn parse_density<T: Real, R: Read>(
    reader: R,
    path: &Path,
    nodes: &NodeSet<T>,
) -> Result<PopulationMap<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["id", "density"] {
        return Err(parse_err(1, "expected header id,density".into()));
    }
    let index: HashMap<i64, NodeId> = nodes
        .original_ids()
        .iter()
        .enumerate()
        .map(|(dense, &orig)| (orig, dense))
        .collect();
    let mut density: Vec<Option<T>> = vec![None; nodes.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let id: i64 = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad id {:?}", &rec[0])))?;
        let d: f64 = rec[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| parse_err(line, format!("bad density {:?}", &rec[1])))?;
        let dense = *index
            .get(&id)
            .ok_or_else(|| parse_err(line, format!("id {id} is not in the node set")))?;
        if density[dense].replace(T::lit(d)).is_some() {
            return Err(Error::validation(format!("{}: duplicate density for id {id}", path.display())));
        }
    }
    let missing: Vec<String> = density
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_none())
        .map(|(i, _)| nodes.original_id(i).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "{}: missing density for node ids {}",
            path.display(),
            missing.join(", ")
        )));
    }
    PopulationMap::new(density.into_iter().map(|d| d.unwrap()).collect())
}
