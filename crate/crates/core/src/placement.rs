//! Population-weighted hierarchical placement of content-delivery cloudlets.
//!
//! Starting from the whole tree as one community, each round picks the
//! community whose best CDC still leaves the highest weighted hop count, cuts
//! the CDC's edge toward its most central neighbor, and re-selects a CDC in
//! both halves. Every intermediate level is kept so callers can read the
//! latency-versus-CDC-count curve and pick a level.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{Edge, HopMatrix, NodeId, NodeSet, Topology};
use crate::io_util::output_err;
use crate::population::RequestVector;
use crate::scalar::{compensated_sum, Real};

/// A connected subtree of cloudlets served by one CDC.
#[derive(Clone, Debug, PartialEq)]
pub struct Community<T> {
    /// Sorted ascending.
    pub members: Vec<NodeId>,
    pub cdc: Option<NodeId>,
    pub edges: Vec<Edge<T>>,
}

impl<T: Real> Community<T> {
    /// The whole topology as a single community.
    pub fn whole(topo: &Topology<T>) -> Self {
        Community {
            members: (0..topo.node_count).collect(),
            cdc: None,
            edges: topo.edges.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.members.binary_search(&n).is_ok()
    }

    /// Smallest member id; communities are ordered and tie-broken by it.
    pub fn representative(&self) -> NodeId {
        self.members[0]
    }

    fn index_of(&self, n: NodeId) -> usize {
        self.members.binary_search(&n).expect("node is a member")
    }
}

/// `s̄ = S·r` restricted to one community, indexed like `Community::members`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedHopVector<T> {
    pub values: Vec<T>,
}

impl<T: Real> WeightedHopVector<T> {
    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}

/// For each member `i`: `Σ_{j ∈ members} hops(i, j) · r_j`, with the global
/// (not renormalized) request vector.
///
/// A connected community is a subtree, so tree paths between its members never
/// leave it and the global hop matrix gives in-community distances.
pub fn weighted_hop_vector<T: Real>(
    community: &Community<T>,
    hops: &HopMatrix,
    r: &RequestVector<T>,
) -> WeightedHopVector<T> {
    let values = community
        .members
        .iter()
        .map(|&i| {
            let row = hops.row(i);
            compensated_sum(
                community
                    .members
                    .iter()
                    .map(|&j| T::from(row[j]).expect("hop count fits") * r.get(j)),
            )
        })
        .collect();
    WeightedHopVector { values }
}

fn argmin_member<T: Real>(community: &Community<T>, sbar: &WeightedHopVector<T>) -> NodeId {
    // Members are sorted, so the first strict minimum is the smallest id.
    let mut best = 0;
    for (i, v) in sbar.values.iter().enumerate() {
        if *v < sbar.values[best] {
            best = i;
        }
    }
    community.members[best]
}

/// Member minimizing the weighted hop vector; ties go to the smallest id.
pub fn select_cdc<T: Real>(community: &Community<T>, hops: &HopMatrix, r: &RequestVector<T>) -> NodeId {
    assert!(!community.is_empty(), "cannot select a CDC in an empty community");
    argmin_member(community, &weighted_hop_vector(community, hops, r))
}

/// Removes the edge between `cdc` and its neighbor with the smallest weighted
/// hop value (ties: smallest id), returning the two resulting components.
/// The first returned community contains `cdc`.
pub fn split_community<T: Real>(
    community: &Community<T>,
    cdc: NodeId,
    sbar: &WeightedHopVector<T>,
) -> Result<(Community<T>, Community<T>)> {
    if community.len() < 2 {
        return Err(Error::validation(format!(
            "community {{{}}} has a single member and cannot be split",
            community.representative()
        )));
    }
    if !community.contains(cdc) {
        return Err(Error::validation(format!("CDC {cdc} is not a community member")));
    }
    let cut = community
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.touches(cdc))
        .map(|(idx, e)| {
            let nb = e.other(cdc);
            (idx, nb, sbar.values[community.index_of(nb)])
        })
        .fold(None::<(usize, NodeId, T)>, |best, cand| match best {
            Some(b) if b.2 < cand.2 || (b.2 == cand.2 && b.1 < cand.1) => Some(b),
            _ => Some(cand),
        })
        .ok_or_else(|| Error::validation(format!("CDC {cdc} has no internal edge to cut")))?;
    let remaining: Vec<Edge<T>> = community
        .edges
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != cut.0)
        .map(|(_, e)| *e)
        .collect();
    let (with_cdc, rest) = components_of(&community.members, &remaining, cdc);
    Ok((with_cdc, rest))
}

/// Splits `members` into the component reachable from `root` over `edges` and
/// everything else (which must itself be connected for tree inputs).
fn components_of<T: Real>(
    members: &[NodeId],
    edges: &[Edge<T>],
    root: NodeId,
) -> (Community<T>, Community<T>) {
    let local = |n: NodeId| members.binary_search(&n).expect("edge endpoint is a member");
    let mut adj = vec![Vec::new(); members.len()];
    for e in edges {
        adj[local(e.u)].push(local(e.v));
        adj[local(e.v)].push(local(e.u));
    }
    let mut seen = vec![false; members.len()];
    let mut queue = VecDeque::from([local(root)]);
    seen[local(root)] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let pick = |flag: bool| {
        let m: Vec<NodeId> = members
            .iter()
            .zip(&seen)
            .filter(|(_, s)| **s == flag)
            .map(|(n, _)| *n)
            .collect();
        let es = edges
            .iter()
            .filter(|e| seen[local(e.u)] == flag)
            .copied()
            .collect();
        Community {
            members: m,
            cdc: None,
            edges: es,
        }
    };
    (pick(true), pick(false))
}

/// One level of the hierarchy: `k` communities, each with its CDC.
#[derive(Clone, Debug, PartialEq)]
pub struct Level<T> {
    /// Ordered by smallest member id.
    pub communities: Vec<Community<T>>,
    /// Edge removed to reach this level from the previous one (`None` at k = 1).
    pub split_edge: Option<(NodeId, NodeId)>,
    pub avg_hops: T,
}

impl<T: Real> Level<T> {
    pub fn k(&self) -> usize {
        self.communities.len()
    }

    pub fn cdcs(&self) -> Vec<NodeId> {
        self.communities.iter().map(|c| c.cdc.expect("placed")).collect()
    }

    /// Community index of every node.
    pub fn community_of(&self, node_count: usize) -> Vec<usize> {
        let mut of = vec![usize::MAX; node_count];
        for (ci, c) in self.communities.iter().enumerate() {
            for &m in &c.members {
                of[m] = ci;
            }
        }
        of
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacementResult<T> {
    /// `levels[k - 1]` holds the k-community level.
    pub levels: Vec<Level<T>>,
    /// Nodes in the order they first became CDCs, with the level `k` at which
    /// that happened. A CDC can move when its community is split, so a level's
    /// CDC set is read from `levels`, not from this list.
    pub selection_order: Vec<(NodeId, usize)>,
}

impl<T: Real> PlacementResult<T> {
    pub fn level(&self, k: usize) -> Option<&Level<T>> {
        k.checked_sub(1).and_then(|i| self.levels.get(i))
    }

    pub fn curve(&self) -> Vec<(usize, T)> {
        self.levels.iter().map(|l| (l.k(), l.avg_hops)).collect()
    }
}

struct Working<T> {
    community: Community<T>,
    sbar: WeightedHopVector<T>,
}

impl<T: Real> Working<T> {
    fn new(mut community: Community<T>, hops: &HopMatrix, r: &RequestVector<T>) -> Self {
        let sbar = weighted_hop_vector(&community, hops, r);
        community.cdc = Some(argmin_member(&community, &sbar));
        Working { community, sbar }
    }

    fn cost(&self) -> T {
        self.sbar.values[self.community.index_of(self.community.cdc.unwrap())]
    }
}

/// Runs the splitting heuristic up to `k_max` communities.
pub fn hierarchical_placement<T: Real>(
    topo: &Topology<T>,
    hops: &HopMatrix,
    r: &RequestVector<T>,
    k_max: usize,
) -> Result<PlacementResult<T>> {
    let n = topo.node_count;
    if k_max == 0 || k_max > n {
        return Err(Error::validation(format!(
            "number of CDCs must be in 1..={n}, got {k_max}"
        )));
    }
    if r.len() != n || hops.len() != n {
        return Err(Error::validation("request vector and hop matrix must cover every node"));
    }
    let mut work = vec![Working::new(Community::whole(topo), hops, r)];
    let mut levels = Vec::with_capacity(k_max);
    let mut selection_order = vec![(work[0].community.cdc.unwrap(), 1)];
    let mut ever_selected = vec![false; n];
    ever_selected[selection_order[0].0] = true;
    levels.push(snapshot(&work, None));

    while work.len() < k_max {
        // Highest min(s̄) among splittable communities; ties to the smallest
        // representative (work is kept sorted by representative).
        let target = work
            .iter()
            .enumerate()
            .filter(|(_, w)| w.community.len() > 1)
            .fold(None::<(usize, T)>, |best, (i, w)| {
                let c = w.cost();
                match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((i, c)),
                }
            })
            .map(|(i, _)| i)
            .expect("fewer than n communities leaves a splittable one");
        let parent = work.remove(target);
        let cdc = parent.community.cdc.unwrap();
        let (a, b) = split_community(&parent.community, cdc, &parent.sbar)?;
        let cut = parent
            .community
            .edges
            .iter()
            .find(|e| a.contains(e.u) != a.contains(e.v))
            .map(Edge::key);
        let children = [Working::new(a, hops, r), Working::new(b, hops, r)];
        let k = work.len() + 2;
        let mut fresh: Vec<NodeId> = children
            .iter()
            .map(|c| c.community.cdc.unwrap())
            .filter(|&c| !ever_selected[c])
            .collect();
        fresh.sort_unstable();
        for &c in &fresh {
            ever_selected[c] = true;
        }
        selection_order.extend(fresh.into_iter().map(|c| (c, k)));
        work.extend(children);
        work.sort_by_key(|w| w.community.representative());
        levels.push(snapshot(&work, cut));
    }
    Ok(PlacementResult {
        levels,
        selection_order,
    })
}

fn snapshot<T: Real>(work: &[Working<T>], split_edge: Option<(NodeId, NodeId)>) -> Level<T> {
    Level {
        communities: work.iter().map(|w| w.community.clone()).collect(),
        split_edge,
        avg_hops: compensated_sum(work.iter().map(Working::cost)),
    }
}

/// `Σ_i r_i · hops(i, cdc(i))` over a partition with placed CDCs.
pub fn avg_weighted_hops<T: Real>(
    communities: &[Community<T>],
    hops: &HopMatrix,
    r: &RequestVector<T>,
) -> T {
    compensated_sum(communities.iter().flat_map(|c| {
        let cdc = c.cdc.expect("community has a CDC");
        c.members
            .iter()
            .map(move |&i| r.get(i) * T::from(hops.get(i, cdc)).expect("hop count fits"))
    }))
}

/// Knee of a decreasing curve: the point farthest from the chord joining the
/// first and last points. Ties go to the smaller `k`.
pub fn elbow_estimate<T: Real>(curve: &[(usize, T)]) -> Result<usize> {
    if curve.len() < 3 {
        return Err(Error::validation(format!(
            "elbow needs at least 3 curve points, got {}",
            curve.len()
        )));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::validation("curve k values must be strictly increasing"));
    }
    let (x0, y0) = (T::from_count(curve[0].0), curve[0].1);
    let (x1, y1) = {
        let last = curve[curve.len() - 1];
        (T::from_count(last.0), last.1)
    };
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = dx.hypot(dy);
    let dist = |(k, y): (usize, T)| ((T::from_count(k) - x0) * dy - (y - y0) * dx).abs() / norm;
    // Distances that differ only by rounding count as ties.
    let scale = curve
        .iter()
        .map(|&(k, y)| T::from_count(k).abs().max(y.abs()))
        .fold(T::zero(), T::max);
    let eps = scale * T::lit(1e-12);
    let mut best = (curve[1].0, dist(curve[1]));
    for &p in &curve[2..curve.len() - 1] {
        let d = dist(p);
        if d > best.1 + eps {
            best = (p.0, d);
        }
    }
    Ok(best.0)
}

/// Writes `node_id,community_id,cdc_id` rows for one level, using original ids.
pub fn export_placement<T: Real, W: Write>(
    level: &Level<T>,
    nodes: &NodeSet<T>,
    out: W,
    path: &Path,
) -> Result<()> {
    let mut rows: Vec<(NodeId, usize, NodeId)> = level
        .communities
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.members.iter().map(move |&m| (m, ci, c.cdc.unwrap())))
        .collect();
    rows.sort_unstable();
    let mut w = csv::Writer::from_writer(out);
    let res = (|| -> csv::Result<()> {
        w.write_record(["node_id", "community_id", "cdc_id"])?;
        for (m, ci, cdc) in rows {
            w.write_record(&[
                nodes.original_id(m).to_string(),
                ci.to_string(),
                nodes.original_id(cdc).to_string(),
            ])?;
        }
        w.flush()
            .map_err(csv::Error::from)
    })();
    res.map_err(|e| output_err(path, e))
}

/// Writes the `k,avg_hops` curve.
pub fn export_curve<T: Real, W: Write>(curve: &[(usize, T)], out: W, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let res = (|| -> csv::Result<()> {
        w.write_record(["k", "avg_hops"])?;
        for (k, y) in curve {
            w.write_record(&[k.to_string(), format!("{:.6}", y.as_f64())])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    res.map_err(|e| output_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{build_emst, hop_matrix, synth_nodes, BoundingBox, DistanceMetric};
    use crate::population::{request_probabilities, PopulationMap};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tree(n: usize, edges: &[(usize, usize)]) -> Topology<f64> {
        Topology {
            node_count: n,
            edges: edges.iter().map(|&(u, v)| Edge::new(u, v, 1.0)).collect(),
        }
    }

    fn rv(g: &[f64]) -> RequestVector<f64> {
        request_probabilities(&PopulationMap::new(g.to_vec()).unwrap())
    }

    /// BFS restricted to community edges; independent of the hop matrix.
    fn in_community_hops(c: &Community<f64>, src: NodeId) -> Vec<(NodeId, u32)> {
        let mut dist = std::collections::BTreeMap::from([(src, 0u32)]);
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            let du = dist[&u];
            for e in c.edges.iter().filter(|e| e.touches(u)) {
                let v = e.other(u);
                if !dist.contains_key(&v) {
                    dist.insert(v, du + 1);
                    q.push_back(v);
                }
            }
        }
        dist.into_iter().collect()
    }

    fn random_tree(n: usize, seed: u64) -> (Topology<f64>, HopMatrix, RequestVector<f64>) {
        let nodes: NodeSet<f64> = synth_nodes(n, BoundingBox::BROOKLYN, seed).unwrap();
        let t = build_emst(&nodes, DistanceMetric::Haversine);
        let h = hop_matrix(&t);
        let g: Vec<f64> = (0..n).map(|i| 1.0 + ((i as u64 * 7919 + seed) % 13) as f64).collect();
        (t, h, rv(&g))
    }

    #[test]
    fn chain_examples() {
        let t = tree(3, &[(0, 1), (1, 2)]);
        let h = hop_matrix(&t);
        let r = rv(&[1.0, 1.0, 1.0]);
        let c = Community::whole(&t);
        let s = weighted_hop_vector(&c, &h, &r);
        assert_relative_eq!(s.values[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.values[1], 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(s.values[2], 1.0, max_relative = 1e-15);
        assert_eq!(select_cdc(&c, &h, &r), 1);

        let (a, b) = split_community(&c, 1, &s).unwrap();
        assert_eq!(a.members, vec![1, 2]);
        assert_eq!(b.members, vec![0]);

        let mut placed = c.clone();
        placed.cdc = Some(1);
        assert_relative_eq!(avg_weighted_hops(&[placed], &h, &r), 2.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn singleton_vector_is_zero_and_cannot_split() {
        let t = tree(1, &[]);
        let h = hop_matrix(&t);
        let r = rv(&[3.0]);
        let c = Community::whole(&t);
        let s = weighted_hop_vector(&c, &h, &r);
        assert_eq!(s.values, vec![0.0]);
        assert!(split_community(&c, 0, &s).is_err());
    }

    #[test]
    fn skewed_chain_picks_heavy_end() {
        let t = tree(3, &[(0, 1), (1, 2)]);
        let h = hop_matrix(&t);
        let r = rv(&[0.8, 0.1, 0.1]);
        let s = weighted_hop_vector(&Community::whole(&t), &h, &r);
        // Hand oracle: node0 = 0.1 + 0.2, node1 = 0.8 + 0.1, node2 = 1.6 + 0.1.
        for (got, want) in s.values.iter().zip([0.3, 0.9, 1.7]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        assert_eq!(select_cdc(&Community::whole(&t), &h, &r), 0);
    }

    #[test]
    fn star_selects_hub_and_cuts_smallest_leaf() {
        let t = tree(4, &[(3, 0), (3, 1), (3, 2)]);
        let h = hop_matrix(&t);
        let r = rv(&[1.0; 4]);
        let c = Community::whole(&t);
        assert_eq!(select_cdc(&c, &h, &r), 3);
        let s = weighted_hop_vector(&c, &h, &r);
        let (a, b) = split_community(&c, 3, &s).unwrap();
        assert_eq!(a.members, vec![1, 2, 3]);
        assert_eq!(b.members, vec![0]);
    }

    #[test]
    fn asymmetric_tree_split_matches_manual_removal() {
        //     0 - 1 - 2 - 3
        //         |
        //         4 - 5
        let t = tree(6, &[(0, 1), (1, 2), (2, 3), (1, 4), (4, 5)]);
        let h = hop_matrix(&t);
        let r = rv(&[1.0, 1.0, 2.0, 1.0, 1.0, 1.0]);
        let c = Community::whole(&t);
        let s = weighted_hop_vector(&c, &h, &r);
        let cdc = select_cdc(&c, &h, &r);
        assert_eq!(cdc, 1);
        // Neighbors of 1 are {0, 2, 4}; node 2 holds the heavy weight.
        let best_nb = [0, 2, 4]
            .into_iter()
            .min_by(|a, b| s.values[*a].partial_cmp(&s.values[*b]).unwrap().then(a.cmp(b)))
            .unwrap();
        assert_eq!(best_nb, 2);
        let (a, b) = split_community(&c, cdc, &s).unwrap();
        assert_eq!(a.members, vec![0, 1, 4, 5]);
        assert_eq!(b.members, vec![2, 3]);
        assert_eq!(a.edges.len(), 3);
        assert_eq!(b.edges.len(), 1);
    }

    #[test]
    fn k1_and_kn_extremes() {
        let (t, h, r) = random_tree(12, 5);
        let p = hierarchical_placement(&t, &h, &r, 12).unwrap();
        assert_eq!(p.levels[0].cdcs(), vec![select_cdc(&Community::whole(&t), &h, &r)]);
        let last = &p.levels[11];
        assert_eq!(last.k(), 12);
        assert!(last.communities.iter().all(|c| c.len() == 1 && c.cdc == Some(c.members[0])));
        assert_eq!(last.avg_hops, 0.0);
        assert_eq!(p.selection_order.len(), 12);
        assert!(hierarchical_placement(&t, &h, &r, 0).is_err());
        assert!(hierarchical_placement(&t, &h, &r, 13).is_err());
    }

    #[test]
    fn weighted_vector_matches_double_loop_oracle() {
        let (t, h, r) = random_tree(15, 9);
        let p = hierarchical_placement(&t, &h, &r, 4).unwrap();
        for c in p.levels.iter().flat_map(|l| &l.communities) {
            let s = weighted_hop_vector(c, &h, &r);
            for (idx, &i) in c.members.iter().enumerate() {
                let oracle: f64 = in_community_hops(c, i)
                    .into_iter()
                    .map(|(j, d)| d as f64 * r.get(j))
                    .sum();
                assert_relative_eq!(s.values[idx], oracle, max_relative = 1e-12, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn elbow_examples() {
        let linear: Vec<(usize, f64)> = (1..=6).map(|k| (k, 60.0 - 10.0 * k as f64)).collect();
        assert_eq!(elbow_estimate(&linear).unwrap(), 2);
        let l = [(1, 100.0), (2, 10.0), (3, 9.0), (4, 8.0)];
        assert_eq!(elbow_estimate(&l).unwrap(), 2);
        assert!(elbow_estimate(&l[..2]).is_err());
        assert!(elbow_estimate(&[(1, 3.0), (1, 2.0), (2, 1.0)]).is_err());
    }

    #[test]
    fn export_rows_cover_every_node() {
        let nodes: NodeSet<f64> = synth_nodes(8, BoundingBox::BROOKLYN, 2).unwrap();
        let t = build_emst(&nodes, DistanceMetric::Haversine);
        let h = hop_matrix(&t);
        let r = rv(&[1.0; 8]);
        let p = hierarchical_placement(&t, &h, &r, 3).unwrap();
        let mut buf = Vec::new();
        export_placement(&p.levels[2], &nodes, &mut buf, Path::new("p.csv")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("node_id,community_id,cdc_id\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn levels_partition_and_never_get_worse(seed in 0u64..10_000, n in 2usize..40) {
            let (t, h, r) = random_tree(n, seed);
            let k_max = n.min(10);
            let p = hierarchical_placement(&t, &h, &r, k_max).unwrap();
            let mut prev = f64::INFINITY;
            for (i, level) in p.levels.iter().enumerate() {
                prop_assert_eq!(level.k(), i + 1);
                let mut all: Vec<NodeId> = level.communities.iter().flat_map(|c| c.members.clone()).collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                for c in &level.communities {
                    prop_assert!(c.contains(c.cdc.unwrap()));
                    prop_assert_eq!(c.edges.len() + 1, c.len());
                    prop_assert_eq!(in_community_hops(c, c.members[0]).len(), c.len());
                }
                let direct = avg_weighted_hops(&level.communities, &h, &r);
                prop_assert!((direct - level.avg_hops).abs() <= 1e-12);
                prop_assert!(level.avg_hops <= prev + 1e-12);
                prev = level.avg_hops;
                if let Some((u, v)) = level.split_edge {
                    let before = &p.levels[i - 1];
                    let holders = before
                        .communities
                        .iter()
                        .filter(|c| c.edges.iter().any(|e| e.key() == (u, v)))
                        .count();
                    prop_assert_eq!(holders, 1);
                }
            }
            let again = hierarchical_placement(&t, &h, &r, k_max).unwrap();
            prop_assert_eq!(p, again);
        }
    }
}
