//! Request-level simulation of CDC caching over a placed topology.
//!
//! Each request walks from its origin cloudlet to the community CDC, then (for
//! cooperative policies) to the nearest neighbor CDC that advertised the
//! content, and otherwise to the publisher. The content then traverses the
//! local CDC, which updates its statistics and makes the caching decision.
//! Every `window` requests all CDCs close their popularity windows and
//! exchange snapshots; every `epoch_len` requests community interests are
//! reshuffled.

mod metrics;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{HopMatrix, NodeId};
use crate::placement::Level;
use crate::policy::{
    admit_by_value, baseline_on_access, beta_from_s, local_score, neighborhood_score, popularity_index,
    AccessOutcome, CacheState, LocalTerm, NeighborTerm, PolicyKind, PopularityIndex, PopularityTracker,
};
use crate::population::RequestVector;
use crate::workload::{mle_estimate_s, ContentId, Request, Workload, S_MAX};

pub use metrics::{MetricsSeries, RunTotals, ServedBy, WindowRecord};

const STREAM_WORKLOAD: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_SCENARIO: u64 = 3;

/// How score-based policies obtain β.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaMode {
    /// `beta_from_s` of the community's current skew (for `shat_lfu`, of the
    /// estimated skew).
    Formula,
    Fixed(f64),
}

/// Run parameters; defaults follow the reference Brooklyn setup.
#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub policy: PolicyKind,
    pub contents: usize,
    pub capacity: usize,
    pub alpha: f64,
    pub beta: BetaMode,
    pub s_range: (f64, f64),
    /// Requests between interest reshuffles; 0 disables reshuffling.
    pub epoch_len: u64,
    pub window: u64,
    pub requests: u64,
    pub seed: u64,
    pub neighborhood: usize,
    /// Hop penalty range for fetching from the publisher, drawn per community.
    pub origin_range: (u32, u32),
    /// Neighbor lookup on local misses; `None` uses the policy's default.
    pub cooperative: Option<bool>,
    /// Whether an absent content's local score pays the origin penalty.
    pub local_origin_penalty: bool,
    /// Observations per CDC used by the skew estimator.
    pub mle_window: usize,
    /// Requests between skew re-estimates.
    pub mle_interval: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            policy: PolicyKind::Slfu,
            contents: 600,
            capacity: 20,
            alpha: 0.2,
            beta: BetaMode::Formula,
            s_range: (0.0, 2.0),
            epoch_len: 100_000,
            window: 100,
            requests: 1_000_000,
            seed: 1,
            neighborhood: 24,
            origin_range: (250, 500),
            cooperative: None,
            local_origin_penalty: true,
            mle_window: 1000,
            mle_interval: 1000,
        }
    }
}

impl SimParams {
    pub fn validate(&self, cdc_count: usize) -> Result<()> {
        let fail = |m: String| Err(Error::validation(m));
        if self.contents == 0 {
            return fail("contents must be at least 1".into());
        }
        if self.capacity == 0 {
            return fail("capacity must be at least 1".into());
        }
        if self.window == 0 {
            return fail("window must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if let BetaMode::Fixed(b) = self.beta {
            if !(0.0..=1.0).contains(&b) {
                return fail(format!("beta {b} outside [0, 1]"));
            }
        }
        let (lo, hi) = self.s_range;
        if !(0.0 <= lo && lo <= hi && hi <= S_MAX) {
            return fail(format!("s range [{lo}, {hi}] must be ordered within [0, {S_MAX}]"));
        }
        if self.origin_range.0 == 0 || self.origin_range.0 > self.origin_range.1 {
            return fail(format!(
                "origin range {:?} must be ordered and at least 1 hop",
                self.origin_range
            ));
        }
        if cdc_count > 0 && self.neighborhood >= cdc_count {
            return fail(format!(
                "neighborhood size {} must be below the CDC count {cdc_count}",
                self.neighborhood
            ));
        }
        if self.policy == PolicyKind::ShatLfu && (self.mle_window == 0 || self.mle_interval == 0) {
            return fail("skew estimation window and interval must be at least 1".into());
        }
        Ok(())
    }

    pub fn is_cooperative(&self) -> bool {
        self.cooperative.unwrap_or_else(|| self.policy.is_cooperative())
    }
}

/// Immutable network description shared by every run over one placement.
#[derive(Clone, Debug)]
pub struct Scenario {
    hops: HopMatrix,
    r: RequestVector<f64>,
    cdcs: Vec<NodeId>,
    community_of: Vec<usize>,
    /// Hops from each node to its community CDC.
    access_hops: Vec<u32>,
    /// Mean hop distance from a community's cloudlets to its CDC, at least 1.
    intra_delay: Vec<f64>,
    /// Request mass of each community.
    mass: Vec<f64>,
}

impl Scenario {
    pub fn new(hops: HopMatrix, r: RequestVector<f64>, level: &Level<f64>) -> Result<Self> {
        let n = hops.len();
        if r.len() != n {
            return Err(Error::validation("request vector does not match the topology"));
        }
        let community_of = level.community_of(n);
        if community_of.iter().any(|&c| c == usize::MAX) {
            return Err(Error::validation("placement does not cover every node"));
        }
        let cdcs = level.cdcs();
        let access_hops: Vec<u32> = (0..n).map(|i| hops.get(i, cdcs[community_of[i]])).collect();
        let intra_delay = level
            .communities
            .iter()
            .map(|c| {
                let total: u64 = c.members.iter().map(|&m| u64::from(access_hops[m])).sum();
                (total as f64 / c.len() as f64).max(1.0)
            })
            .collect();
        let mass = level.communities.iter().map(|c| r.mass(&c.members)).collect();
        Ok(Scenario {
            hops,
            r,
            cdcs,
            community_of,
            access_hops,
            intra_delay,
            mass,
        })
    }

    pub fn cdcs(&self) -> &[NodeId] {
        &self.cdcs
    }

    pub fn cdc_count(&self) -> usize {
        self.cdcs.len()
    }

    pub fn node_count(&self) -> usize {
        self.hops.len()
    }

    pub fn community_of(&self) -> &[usize] {
        &self.community_of
    }

    pub fn access_hops(&self, node: NodeId) -> u32 {
        self.access_hops[node]
    }

    pub fn intra_delay(&self, cdc: usize) -> f64 {
        self.intra_delay[cdc]
    }

    pub fn mass(&self, cdc: usize) -> f64 {
        self.mass[cdc]
    }

    /// Hop distance between two CDCs (by CDC index).
    pub fn cdc_hops(&self, a: usize, b: usize) -> u32 {
        self.hops.get(self.cdcs[a], self.cdcs[b])
    }

    /// Request-weighted mean access distance: the latency floor with every
    /// request served by its local CDC.
    pub fn mean_access_hops(&self) -> f64 {
        self.r
            .as_slice()
            .iter()
            .zip(&self.access_hops)
            .map(|(r, h)| r * f64::from(*h))
            .sum()
    }

    pub fn requests(&self) -> &RequestVector<f64> {
        &self.r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    /// CDC index.
    pub cdc: usize,
    pub hops: u32,
}

/// The `size` nearest other CDCs of every CDC by hop distance (ties: smaller
/// node id), nearest first.
pub fn neighborhood(scenario: &Scenario, size: usize) -> Result<Vec<Vec<Neighbor>>> {
    let k = scenario.cdc_count();
    if size > 0 && size >= k {
        return Err(Error::validation(format!(
            "neighborhood size {size} needs more than {k} CDCs"
        )));
    }
    Ok((0..k)
        .map(|i| {
            let mut others: Vec<Neighbor> = (0..k)
                .filter(|&j| j != i)
                .map(|j| Neighbor {
                    cdc: j,
                    hops: scenario.cdc_hops(i, j),
                })
                .collect();
            others.sort_by_key(|n| (n.hops, scenario.cdcs[n.cdc]));
            others.truncate(size);
            others
        })
        .collect())
}

/// Result of routing one request.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RequestOutcome {
    pub request: Request,
    /// Index of the requester's community CDC.
    pub cdc: usize,
    pub served_by: ServedBy,
    /// Requester to its CDC.
    pub access_hops: u32,
    /// CDC to wherever the content came from (0 on a local hit).
    pub fetch_hops: u32,
    pub latency: u32,
    /// Caching decision taken at the local CDC.
    pub cache_event: AccessOutcome,
}

/// What a CDC publishes to its neighbors at each window close.
#[derive(Clone, Debug)]
struct Snapshot {
    popularity: PopularityIndex<f64>,
    resident: Vec<bool>,
    advertised: u64,
}

/// Mutable state of one run.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    params: SimParams,
    cooperative: bool,
    shares_state: bool,
    neighbors: Vec<Vec<Neighbor>>,
    origin: Vec<u32>,
    caches: Vec<CacheState>,
    trackers: Vec<PopularityTracker<f64>>,
    snapshots: Vec<Snapshot>,
    beta: Vec<f64>,
    /// Neighborhood score per CDC and content, valid until the next window close.
    neigh_memo: Vec<Vec<f64>>,
    observations: Vec<VecDeque<ContentId>>,
    estimated_s: Vec<Option<f64>>,
    workload: Workload,
    workload_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    processed: u64,
    window_totals: RunTotals,
    series: MetricsSeries,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, params: SimParams) -> Result<Self> {
        let k = scenario.cdc_count();
        params.validate(k)?;
        let neighbors = neighborhood(scenario, params.neighborhood)?;
        let mut scenario_rng = stream(params.seed, STREAM_SCENARIO);
        let origin = (0..k)
            .map(|_| scenario_rng.gen_range(params.origin_range.0..=params.origin_range.1))
            .collect();
        let mut workload_rng = stream(params.seed, STREAM_WORKLOAD);
        let workload = Workload::new(
            &scenario.r,
            scenario.community_of.clone(),
            k,
            params.contents,
            params.s_range,
            &mut workload_rng,
        )?;
        let m = params.contents;
        let cooperative = params.is_cooperative();
        let shares_state = cooperative || matches!(params.policy, PolicyKind::Slfu | PolicyKind::ShatLfu);
        let mut sim = Simulation {
            scenario,
            cooperative,
            shares_state,
            neighbors,
            origin,
            caches: (0..k).map(|_| CacheState::new(params.capacity)).collect(),
            trackers: (0..k).map(|_| PopularityTracker::new(params.alpha, m)).collect(),
            snapshots: vec![
                Snapshot {
                    popularity: PopularityIndex::zeros(m),
                    resident: vec![false; m],
                    advertised: 0,
                };
                k
            ],
            beta: vec![0.5; k],
            neigh_memo: vec![vec![f64::NAN; m]; k],
            observations: vec![VecDeque::new(); k],
            estimated_s: vec![None; k],
            workload,
            workload_rng,
            policy_rng: stream(params.seed, STREAM_POLICY),
            processed: 0,
            window_totals: RunTotals::default(),
            series: MetricsSeries::default(),
            params,
        };
        sim.refresh_beta();
        Ok(sim)
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn cache(&self, cdc: usize) -> &CacheState {
        &self.caches[cdc]
    }

    pub fn tracker(&self, cdc: usize) -> &PopularityTracker<f64> {
        &self.trackers[cdc]
    }

    pub fn neighbors(&self, cdc: usize) -> &[Neighbor] {
        &self.neighbors[cdc]
    }

    pub fn origin_hops(&self, cdc: usize) -> u32 {
        self.origin[cdc]
    }

    pub fn beta(&self, cdc: usize) -> f64 {
        self.beta[cdc]
    }

    pub fn estimated_s(&self, cdc: usize) -> Option<f64> {
        self.estimated_s[cdc]
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    /// Requests processed so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Whether neighbor `cdc` advertised content `f` at the last window close.
    pub fn advertised(&self, cdc: usize, f: ContentId) -> bool {
        self.snapshots[cdc].resident[f]
    }

    /// Places `f` directly into a CDC cache (scenario setup and tests).
    pub fn preload(&mut self, cdc: usize, f: ContentId) {
        if !self.caches[cdc].contains(f) {
            self.caches[cdc].insert(f);
        }
    }

    /// Republishes every CDC's current state without closing windows.
    pub fn publish_snapshots(&mut self) {
        for i in 0..self.caches.len() {
            self.publish(i);
        }
        for memo in &mut self.neigh_memo {
            memo.fill(f64::NAN);
        }
    }

    fn publish(&mut self, i: usize) {
        let snap = &mut self.snapshots[i];
        snap.popularity = popularity_index(&self.trackers[i]);
        snap.resident.fill(false);
        for f in self.caches[i].resident() {
            snap.resident[f] = true;
        }
        snap.advertised = self.trackers[i].encountered().len() as u64;
    }

    fn refresh_beta(&mut self) {
        for i in 0..self.beta.len() {
            self.beta[i] = match (self.params.policy, self.params.beta) {
                (PolicyKind::ShatLfu, _) => self.estimated_s[i].map_or(0.5, beta_from_s),
                (_, BetaMode::Fixed(b)) => b,
                (_, BetaMode::Formula) => beta_from_s(self.workload.interests()[i].s()),
            };
        }
    }

    /// Draws the next request from the workload.
    pub fn next_request(&mut self) -> Request {
        self.workload.sample_request(&mut self.workload_rng)
    }

    /// Routes one request, applies the caching decision and advances windows.
    pub fn step(&mut self, req: Request) -> RequestOutcome {
        if self.params.epoch_len > 0 && self.processed > 0 && self.processed % self.params.epoch_len == 0 {
            self.workload.shuffle_epoch(&mut self.workload_rng);
            self.refresh_beta();
        }
        let outcome = self.route(req);
        self.window_totals.add(outcome.served_by, outcome.latency);
        self.processed += 1;
        if self.params.policy == PolicyKind::ShatLfu {
            let buf = &mut self.observations[outcome.cdc];
            buf.push_back(req.content);
            if buf.len() > self.params.mle_window {
                buf.pop_front();
            }
            if self.processed % self.params.mle_interval == 0 {
                self.estimate_skew();
            }
        }
        if self.processed % self.params.window == 0 {
            self.close_window();
        }
        outcome
    }

    fn estimate_skew(&mut self) {
        for i in 0..self.observations.len() {
            let obs: Vec<ContentId> = self.observations[i].iter().copied().collect();
            if let Ok(s) = mle_estimate_s::<f64>(&obs, self.params.contents) {
                self.estimated_s[i] = Some(s);
            }
        }
        self.refresh_beta();
    }

    fn close_window(&mut self) {
        for t in &mut self.trackers {
            t.close_window();
        }
        self.publish_snapshots();
        if self.shares_state {
            self.window_totals.exchanged_records = self
                .neighbors
                .iter()
                .flat_map(|ns| ns.iter().map(|n| self.snapshots[n.cdc].advertised))
                .sum();
        }
        let window = self.series.windows.len() as u64;
        self.series.windows.push(self.window_totals.record(window));
        self.series.totals.merge(&self.window_totals);
        self.window_totals = RunTotals::default();
    }

    /// Finishes a partial trailing window and returns the metrics.
    pub fn finish(mut self) -> MetricsSeries {
        if self.window_totals.requests > 0 {
            let window = self.series.windows.len() as u64;
            self.series.windows.push(self.window_totals.record(window));
            self.series.totals.merge(&self.window_totals);
        }
        self.series
    }

    fn route(&mut self, req: Request) -> RequestOutcome {
        let sc = self.scenario;
        let i = sc.community_of[req.origin_node];
        let f = req.content;
        let access_hops = sc.access_hops[req.origin_node];
        let (served_by, fetch_hops) = if self.caches[i].contains(f) {
            (ServedBy::Local, 0)
        } else if let Some(nb) = self
            .cooperative
            .then(|| self.neighbors[i].iter().find(|n| self.snapshots[n.cdc].resident[f]).copied())
            .flatten()
        {
            if self.caches[nb.cdc].contains(f) {
                (ServedBy::Neighbor(nb.cdc), nb.hops)
            } else {
                (ServedBy::StaleNeighbor(nb.cdc), nb.hops + self.origin[nb.cdc])
            }
        } else {
            (ServedBy::Origin, self.origin[i])
        };
        self.trackers[i].record(f);
        let cache_event = self.decide(i, f);
        RequestOutcome {
            request: req,
            cdc: i,
            served_by,
            access_hops,
            fetch_hops,
            latency: access_hops + fetch_hops,
            cache_event,
        }
    }

    fn decide(&mut self, i: usize, f: ContentId) -> AccessOutcome {
        if let Some(b) = self.params.policy.baseline() {
            return baseline_on_access(b, &mut self.caches[i], f, &mut self.policy_rng);
        }
        if self.caches[i].contains(f) {
            self.caches[i].touch(f);
            return AccessOutcome::Hit;
        }
        match self.params.policy {
            PolicyKind::Plfu => {
                let p = &self.snapshots[i].popularity;
                admit_by_value(&mut self.caches[i], f, |g| p.get(g))
            }
            _ => {
                // Scores belong to the period: availability, like popularity,
                // comes from the last window close.
                let values: Vec<(ContentId, f64)> = self.caches[i]
                    .resident()
                    .chain(std::iter::once(f))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .map(|g| (g, self.score(i, g, self.snapshots[i].resident[g])))
                    .collect();
                admit_by_value(&mut self.caches[i], f, |g| {
                    values.iter().find(|(c, _)| *c == g).map(|(_, v)| *v).unwrap()
                })
            }
        }
    }

    /// Caching score of content `f` at CDC `i` with local availability as given.
    pub fn score(&mut self, i: usize, f: ContentId, available: bool) -> f64 {
        let sc = self.scenario;
        let beta = self.beta[i];
        let local = local_score(&LocalTerm {
            r: sc.mass[i],
            p: self.snapshots[i].popularity.get(f),
            delay: sc.intra_delay[i],
            available,
            origin: if self.params.local_origin_penalty {
                f64::from(self.origin[i])
            } else {
                0.0
            },
        });
        if self.neighbors[i].is_empty() || beta == 0.0 {
            return local;
        }
        let mut neigh = self.neigh_memo[i][f];
        if neigh.is_nan() {
            let terms: Vec<NeighborTerm<f64>> = self.neighbors[i]
                .iter()
                .map(|n| NeighborTerm {
                    r: sc.mass[n.cdc],
                    p: self.snapshots[n.cdc].popularity.get(f),
                    hops: f64::from(n.hops),
                    available: self.snapshots[n.cdc].resident[f],
                    origin: f64::from(self.origin[n.cdc]),
                })
                .collect();
            neigh = neighborhood_score(&terms);
            self.neigh_memo[i][f] = neigh;
        }
        beta * neigh + (1.0 - beta) * local
    }

    /// Runs `params.requests` sampled requests to completion.
    pub fn run(mut self) -> MetricsSeries {
        for _ in 0..self.params.requests {
            let req = self.next_request();
            self.step(req);
        }
        self.finish()
    }

    /// Replays a recorded trace instead of sampling.
    pub fn replay(mut self, trace: &[Request]) -> Result<MetricsSeries> {
        let n = self.scenario.node_count();
        for &req in trace {
            if req.origin_node >= n || req.content >= self.params.contents {
                return Err(Error::validation(format!(
                    "trace request {} references an unknown node or content",
                    req.sequence_no
                )));
            }
            self.step(req);
        }
        Ok(self.finish())
    }
}

/// One full run over a prepared scenario.
pub fn run(scenario: &Scenario, params: SimParams) -> Result<MetricsSeries> {
    Ok(Simulation::new(scenario, params)?.run())
}
