//! Cloudlet locations, geographic distances, the minimum spanning tree backhaul
//! and all-pairs hop counts over it.

use std::collections::{HashSet, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io_util::{open_input, output_err};
use crate::scalar::Real;

pub type NodeId = usize;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node<T> {
    pub id: NodeId,
    pub lat: T,
    pub lon: T,
}

/// Geolocated cloudlets with dense ids `0..len()`.
///
/// Input files may carry arbitrary integer ids; they are re-indexed densely in
/// input order and the original ids are kept for export. An optional density
/// column rides along for [`crate::population`].
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet<T> {
    nodes: Vec<Node<T>>,
    original_ids: Vec<i64>,
    density: Option<Vec<T>>,
}

impl<T: Real> NodeSet<T> {
    /// Builds a node set from `(lat, lon)` pairs with ids `0..n`.
    pub fn from_coords(coords: &[(T, T)]) -> Result<Self> {
        let nodes = coords
            .iter()
            .enumerate()
            .map(|(id, &(lat, lon))| Node { id, lat, lon })
            .collect::<Vec<_>>();
        let original_ids = (0..nodes.len() as i64).collect();
        let set = NodeSet {
            nodes,
            original_ids,
            density: None,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::validation("node set is empty"));
        }
        for n in &self.nodes {
            if !in_range(n.lat, 90.0) || !in_range(n.lon, 180.0) {
                return Err(Error::validation(format!(
                    "node {} has out-of-range coordinates ({}, {})",
                    self.original_ids[n.id], n.lat, n.lon
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node<T> {
        &self.nodes[id]
    }

    /// Original id of a dense node id.
    pub fn original_id(&self, id: NodeId) -> i64 {
        self.original_ids[id]
    }

    pub fn original_ids(&self) -> &[i64] {
        &self.original_ids
    }

    /// Dense id for an original id, if present.
    pub fn dense_id(&self, original: i64) -> Option<NodeId> {
        self.original_ids.iter().position(|&o| o == original)
    }

    /// Density column from the node file, when it had one.
    pub fn density_column(&self) -> Option<&[T]> {
        self.density.as_deref()
    }

    pub fn with_density_column(mut self, density: Vec<T>) -> Result<Self> {
        if density.len() != self.nodes.len() {
            return Err(Error::validation(format!(
                "density column has {} entries for {} nodes",
                density.len(),
                self.nodes.len()
            )));
        }
        self.density = Some(density);
        Ok(self)
    }
}

fn in_range<T: Real>(v: T, bound: f64) -> bool {
    v.is_finite() && v.abs() <= T::lit(bound)
}

/// Reads a node file (`id,lat,lon[,density]`).
pub fn load_nodes<T: Real>(path: &Path) -> Result<NodeSet<T>> {
    let file = open_input(path)?;
    parse_nodes(file, path)
}

pub fn parse_nodes<T: Real, R: Read>(reader: R, path: &Path) -> Result<NodeSet<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_density = match cols.as_slice() {
        ["id", "lat", "lon"] => false,
        ["id", "lat", "lon", "density"] => true,
        _ => {
            return Err(parse_err(
                1,
                format!("expected header id,lat,lon[,density], found {}", cols.join(",")),
            ))
        }
    };

    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut density = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let want = if has_density { 4 } else { 3 };
        if rec.len() != want {
            return Err(parse_err(line, format!("expected {want} fields, found {}", rec.len())));
        }
        let id: i64 = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad id {:?}", &rec[0])))?;
        let num = |i: usize, what: &str| -> Result<T> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(T::lit)
                .ok_or_else(|| parse_err(line, format!("bad {what} {:?}", &rec[i])))
        };
        let lat = num(1, "lat")?;
        let lon = num(2, "lon")?;
        if !in_range(lat, 90.0) || !in_range(lon, 180.0) {
            return Err(parse_err(line, format!("coordinates out of range ({lat}, {lon})")));
        }
        if has_density {
            let d = num(3, "density")?;
            if d < T::zero() {
                return Err(parse_err(line, format!("negative density {d}")));
            }
            density.push(d);
        }
        if !seen.insert(id) {
            return Err(Error::validation(format!(
                "{}: duplicate node id {id} (line {line})",
                path.display()
            )));
        }
        ids.push(id);
        coords.push((lat, lon));
    }
    if ids.is_empty() {
        return Err(Error::validation(format!("{}: no nodes", path.display())));
    }

    // Ids that already form 0..n keep their positions; anything else is
    // re-indexed in input order.
    let n = ids.len();
    let dense = ids.iter().all(|&id| id >= 0 && (id as usize) < n);
    let order: Vec<usize> = if dense {
        let mut order = vec![0; n];
        for (row, &id) in ids.iter().enumerate() {
            order[id as usize] = row;
        }
        order
    } else {
        (0..n).collect()
    };
    let nodes = order
        .iter()
        .enumerate()
        .map(|(id, &row)| Node {
            id,
            lat: coords[row].0,
            lon: coords[row].1,
        })
        .collect();
    let original_ids = order.iter().map(|&row| ids[row]).collect();
    let density = has_density.then(|| order.iter().map(|&row| density[row]).collect());
    Ok(NodeSet {
        nodes,
        original_ids,
        density,
    })
}

/// Writes a node file that [`load_nodes`] reads back to the same set.
pub fn export_nodes<T: Real, W: Write>(nodes: &NodeSet<T>, out: W, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let res = (|| -> csv::Result<()> {
        if nodes.density.is_some() {
            w.write_record(["id", "lat", "lon", "density"])?;
        } else {
            w.write_record(["id", "lat", "lon"])?;
        }
        for n in &nodes.nodes {
            let mut row = vec![
                nodes.original_ids[n.id].to_string(),
                n.lat.to_string(),
                n.lon.to_string(),
            ];
            if let Some(d) = &nodes.density {
                row.push(d[n.id].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| output_err(path, e))
}

/// Latitude/longitude box for synthetic node placement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    /// Roughly the extent of Brooklyn.
    pub const BROOKLYN: BoundingBox = BoundingBox {
        lat_min: 40.57,
        lat_max: 40.74,
        lon_min: -74.04,
        lon_max: -73.86,
    };
}

/// Uniformly scattered synthetic cloudlets; same seed, same set.
pub fn synth_nodes<T: Real>(n: usize, bbox: BoundingBox, seed: u64) -> Result<NodeSet<T>> {
    if n == 0 {
        return Err(Error::validation("synthetic node count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<(T, T)> = (0..n)
        .map(|_| {
            let lat = rng.gen_range(bbox.lat_min..=bbox.lat_max);
            let lon = rng.gen_range(bbox.lon_min..=bbox.lon_max);
            (T::lit(lat), T::lit(lon))
        })
        .collect();
    NodeSet::from_coords(&coords)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceMetric {
    /// Great-circle distance in meters.
    #[default]
    Haversine,
    /// Straight-line distance treating (lat, lon) as plane coordinates.
    Planar,
}

impl DistanceMetric {
    pub fn distance<T: Real>(self, a: &Node<T>, b: &Node<T>) -> T {
        match self {
            DistanceMetric::Haversine => geo_distance((a.lat, a.lon), (b.lat, b.lon)),
            DistanceMetric::Planar => (a.lat - b.lat).hypot(a.lon - b.lon),
        }
    }
}

/// Haversine distance in meters between two `(lat, lon)` points in degrees.
pub fn geo_distance<T: Real>(a: (T, T), b: (T, T)) -> T {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let half = T::lit(0.5);
    let dlat = ((lat2 - lat1) * half).sin();
    let dlon = ((lon2 - lon1) * half).sin();
    let h = dlat * dlat + lat1.cos() * lat2.cos() * dlon * dlon;
    let h = h.min(T::one()).max(T::zero());
    T::lit(2.0 * EARTH_RADIUS_M) * h.sqrt().asin()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<T> {
    /// Always `u < v`.
    pub u: NodeId,
    pub v: NodeId,
    pub weight: T,
}

impl<T> Edge<T> {
    pub fn new(a: NodeId, b: NodeId, weight: T) -> Self {
        Edge {
            u: a.min(b),
            v: a.max(b),
            weight,
        }
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.u, self.v)
    }

    pub fn touches(&self, n: NodeId) -> bool {
        self.u == n || self.v == n
    }

    pub fn other(&self, n: NodeId) -> NodeId {
        if self.u == n {
            self.v
        } else {
            self.u
        }
    }
}

/// Spanning-tree backhaul: `node_count - 1` weighted edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology<T> {
    pub node_count: usize,
    pub edges: Vec<Edge<T>>,
}

impl<T: Real> Topology<T> {
    pub fn total_weight(&self) -> T {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn summary(&self) -> TopologySummary {
        let total = self.total_weight().as_f64();
        let avg = if self.edges.is_empty() {
            0.0
        } else {
            total / self.edges.len() as f64
        };
        TopologySummary {
            node_count: self.node_count,
            edge_count: self.edges.len(),
            total_length_m: total,
            avg_edge_length_m: avg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopologySummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub total_length_m: f64,
    pub avg_edge_length_m: f64,
}

/// Minimum spanning tree over the complete geographic graph, grown with Prim's
/// algorithm from node 0. Among equal-weight candidates the edge with the
/// smallest `(min(u,v), max(u,v))` wins, so the result is deterministic.
pub fn build_emst<T: Real>(nodes: &NodeSet<T>, metric: DistanceMetric) -> Topology<T> {
    let n = nodes.len();
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n <= 1 {
        return Topology {
            node_count: n,
            edges,
        };
    }
    let pts = nodes.nodes();
    let mut in_tree = vec![false; n];
    // Cheapest known connection for each vertex outside the tree.
    let mut best: Vec<Option<(T, NodeId)>> = vec![None; n];
    in_tree[0] = true;
    for v in 1..n {
        best[v] = Some((metric.distance(&pts[0], &pts[v]), 0));
    }
    let better = |cand: (T, (NodeId, NodeId)), cur: (T, (NodeId, NodeId))| {
        cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1)
    };
    for _ in 1..n {
        let mut pick: Option<(T, (NodeId, NodeId), NodeId)> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let (w, p) = best[v].expect("all outside vertices have a candidate");
            let key = (p.min(v), p.max(v));
            if pick.map_or(true, |(pw, pk, _)| better((w, key), (pw, pk))) {
                pick = Some((w, key, v));
            }
        }
        let (w, (a, b), v) = pick.expect("graph is complete");
        in_tree[v] = true;
        edges.push(Edge::new(a, b, w));
        for x in 0..n {
            if in_tree[x] {
                continue;
            }
            let d = metric.distance(&pts[v], &pts[x]);
            let (cw, cp) = best[x].expect("candidate present");
            if better((d, (v.min(x), v.max(x))), (cw, (cp.min(x), cp.max(x)))) {
                best[x] = Some((d, v));
            }
        }
    }
    Topology {
        node_count: n,
        edges,
    }
}

/// Writes `u,v,weight_m` rows using the node set's original ids.
pub fn export_topology<T: Real, W: Write>(
    topo: &Topology<T>,
    nodes: &NodeSet<T>,
    out: W,
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let res = (|| -> csv::Result<()> {
        w.write_record(["u", "v", "weight_m"])?;
        for e in &topo.edges {
            w.write_record(&[
                nodes.original_id(e.u).to_string(),
                nodes.original_id(e.v).to_string(),
                format!("{:.3}", e.weight.as_f64()),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| output_err(path, e))
}

/// All-pairs hop counts over a connected tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopMatrix {
    n: usize,
    hops: Vec<u32>,
}

impl HopMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, u: NodeId, v: NodeId) -> u32 {
        self.hops[u * self.n + v]
    }

    pub fn row(&self, u: NodeId) -> &[u32] {
        &self.hops[u * self.n..(u + 1) * self.n]
    }
}

/// Breadth-first traversal from every node.
pub fn hop_matrix<T: Real>(topo: &Topology<T>) -> HopMatrix {
    let n = topo.node_count;
    let adj = topo.adjacency();
    let mut hops = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for src in 0..n {
        let row = &mut hops[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for &v in &adj[u] {
                if row[v] == u32::MAX {
                    row[v] = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    debug_assert!(hops.iter().all(|&h| h != u32::MAX), "topology must be connected");
    HopMatrix { n, hops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("mem.csv")
    }

    #[test]
    fn loads_dense_file() {
        let src = "id,lat,lon\n0,40.0,-74.0\n1,40.1,-74.0\n2,40.2,-74.1\n";
        let set: NodeSet<f64> = parse_nodes(src.as_bytes(), &p()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.node(2).lat, 40.2);
        assert!(set.density_column().is_none());
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let src = "id,lat,lon\n7,40.0,-74.0\n7,40.1,-74.0\n";
        let err = parse_nodes::<f64, _>(src.as_bytes(), &p()).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate node id 7")));
    }

    #[test]
    fn sparse_ids_are_reindexed_in_input_order() {
        let src = "id,lat,lon\n3,40.0,-74.0\n9,40.1,-74.0\n40,40.2,-74.0\n";
        let set: NodeSet<f64> = parse_nodes(src.as_bytes(), &p()).unwrap();
        assert_eq!(set.original_ids(), &[3, 9, 40]);
        assert_eq!(set.dense_id(40), Some(2));
        assert_eq!(set.node(1).lat, 40.1);
    }

    #[test]
    fn empty_and_malformed_files() {
        let err = parse_nodes::<f64, _>("id,lat,lon\n".as_bytes(), &p()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = parse_nodes::<f64, _>("id,lat,lon\n0,40.0,-74.0\n1,abc,-74.0\n".as_bytes(), &p())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_nodes::<f64, _>("id,lat,lon\n0,95.0,-74.0\n".as_bytes(), &p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn density_column_follows_reindexing() {
        let src = "id,lat,lon,density\n2,40.0,-74.0,5\n0,40.1,-74.0,7\n1,40.2,-74.0,9\n";
        let set: NodeSet<f64> = parse_nodes(src.as_bytes(), &p()).unwrap();
        assert_eq!(set.density_column().unwrap(), &[7.0, 9.0, 5.0]);
        assert_eq!(set.node(0).lat, 40.1);
    }

    #[test]
    fn haversine_identity_and_one_degree() {
        assert_eq!(geo_distance((40.0, -74.0), (40.0, -74.0)), 0.0);
        let d = geo_distance((0.0f64, 0.0), (0.0, 1.0));
        assert_relative_eq!(d, EARTH_RADIUS_M * std::f64::consts::PI / 180.0, max_relative = 1e-12);
        assert!((d - 111_195.0).abs() < 1.0);
        let delta = 0.013;
        let east = geo_distance((40.0, -74.0), (40.0, -74.0 + delta));
        let west = geo_distance((40.0, -74.0), (40.0, -74.0 - delta));
        assert_relative_eq!(east, west, max_relative = 1e-12);
    }

    #[test]
    fn single_node_tree_has_no_edges() {
        let set = NodeSet::from_coords(&[(40.0f64, -74.0)]).unwrap();
        let t = build_emst(&set, DistanceMetric::Haversine);
        assert!(t.edges.is_empty());
        let h = hop_matrix(&t);
        assert_eq!(h.get(0, 0), 0);
    }

    #[test]
    fn collinear_points_form_a_chain() {
        let set = NodeSet::from_coords(&[(40.0f64, -74.0), (40.0, -73.99), (40.0, -73.98)]).unwrap();
        let t = build_emst(&set, DistanceMetric::Haversine);
        let mut keys: Vec<_> = t.edges.iter().map(Edge::key).collect();
        keys.sort();
        assert_eq!(keys, vec![(0, 1), (1, 2)]);
        let h = hop_matrix(&t);
        assert_eq!(h.get(0, 2), 2);
        assert_eq!(h.get(2, 0), 2);
    }

    #[test]
    fn prim_ties_pick_lexicographically_smallest_edge() {
        // Unit square in planar mode: all four sides tie.
        let set =
            NodeSet::from_coords(&[(0.0f64, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]).unwrap();
        let t = build_emst(&set, DistanceMetric::Planar);
        let mut keys: Vec<_> = t.edges.iter().map(Edge::key).collect();
        keys.sort();
        assert_eq!(keys, vec![(0, 1), (0, 3), (1, 2)]);
    }

    #[test]
    fn export_roundtrip_preserves_node_set() {
        let src = "id,lat,lon,density\n3,40.123456789,-74.000001,12.5\n9,40.1,-74.0,0\n";
        let set: NodeSet<f64> = parse_nodes(src.as_bytes(), &p()).unwrap();
        let mut buf = Vec::new();
        export_nodes(&set, &mut buf, &p()).unwrap();
        let back: NodeSet<f64> = parse_nodes(buf.as_slice(), &p()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn f32_tree_matches_f64_structure_on_well_separated_points() {
        let set64: NodeSet<f64> = synth_nodes(25, BoundingBox::BROOKLYN, 3).unwrap();
        let coords: Vec<(f32, f32)> =
            set64.nodes().iter().map(|n| (n.lat as f32, n.lon as f32)).collect();
        let set32 = NodeSet::from_coords(&coords).unwrap();
        let t64 = build_emst(&set64, DistanceMetric::Haversine);
        let t32 = build_emst(&set32, DistanceMetric::Haversine);
        assert_relative_eq!(t32.total_weight() as f64, t64.total_weight(), max_relative = 1e-3);
    }

    proptest! {
        #[test]
        fn roundtrip_any_node_set(
            pts in prop::collection::vec((-90.0f64..=90.0, -180.0f64..=180.0, 0.0f64..1e5), 1..20),
            offset in -1000i64..1000,
        ) {
            let mut src = String::from("id,lat,lon,density\n");
            for (i, (lat, lon, d)) in pts.iter().enumerate() {
                src.push_str(&format!("{},{},{},{}\n", offset + 3 * i as i64, lat, lon, d));
            }
            let set: NodeSet<f64> = parse_nodes(src.as_bytes(), &p()).unwrap();
            let mut buf = Vec::new();
            export_nodes(&set, &mut buf, &p()).unwrap();
            let back: NodeSet<f64> = parse_nodes(buf.as_slice(), &p()).unwrap();
            prop_assert_eq!(set, back);
        }

        #[test]
        fn hop_matrix_is_a_tree_metric(seed in 0u64..500, n in 1usize..30) {
            let set: NodeSet<f64> = synth_nodes(n, BoundingBox::BROOKLYN, seed).unwrap();
            let t = build_emst(&set, DistanceMetric::Haversine);
            prop_assert_eq!(t.edges.len(), n - 1);
            prop_assert!(t.edges.iter().all(|e| e.weight > 0.0));
            let h = hop_matrix(&t);
            for u in 0..n {
                prop_assert_eq!(h.get(u, u), 0);
                for v in 0..n {
                    prop_assert_eq!(h.get(u, v), h.get(v, u));
                    for w in 0..n {
                        prop_assert!(h.get(u, v) <= h.get(u, w) + h.get(w, v));
                    }
                }
            }
        }
    }
}
